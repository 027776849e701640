#include "umzi/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

namespace umzi {

namespace {


double wrap_phase(double a) {
    a = std::remainder(a, kTwoPi);
    return a <= -kPi ? a + kTwoPi : a;
}

void require_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size())
        throw std::invalid_argument(std::string(what) + ": x and y sizes differ");
}

// Weighted linear least squares for y ~ B c.
Eigen::VectorXd linear_fit(const Eigen::MatrixXd& basis, std::span<const double> y, std::span<const double> w) {
    const Eigen::Index n = basis.rows();
    Eigen::MatrixXd bw = basis;
    Eigen::VectorXd yw(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double s = std::sqrt(w[static_cast<std::size_t>(i)]);
        bw.row(i) *= s;
        yw(i) = s * y[static_cast<std::size_t>(i)];
    }
    return bw.colPivHouseholderQr().solve(yw);
}

// Flip a negative visibility into a phase shift and clamp for reporting.
void finish_visibility(FitResult& r, Eigen::Index v_index, Eigen::Index phase_index) {
    if (r.params(v_index) < 0.0) {
        r.params(v_index) = -r.params(v_index);
        r.params(phase_index) += kPi;
        r.covariance.row(v_index) *= -1.0;
        r.covariance.col(v_index) *= -1.0;
    }
    r.params(phase_index) = wrap_phase(r.params(phase_index));
    r.raw_visibility = r.params(v_index);
    r.visibility = std::clamp(r.raw_visibility, 0.0, 1.0);
    r.visibility_error = r.errors(v_index);
}

double weighted_cost(const FitModel& model, std::span<const double> x, std::span<const double> y,
                     std::span<const double> w, const Eigen::VectorXd& p) {
    double c = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - model.value(x[i], p);
        c += w[i] * r * r;
    }
    return c;
}

}  // namespace

GaussianPeaksModel::GaussianPeaksModel(int n_peaks) : n_(n_peaks) {
    if (n_peaks < 1)
        throw std::invalid_argument("need at least one peak");
}

std::vector<std::string> GaussianPeaksModel::parameter_names() const {
    std::vector<std::string> names{"baseline"};
    for (int k = 1; k <= n_; ++k) {
        names.push_back("amplitude_" + std::to_string(k));
        names.push_back("center_" + std::to_string(k) + "_ps");
        names.push_back("sigma_" + std::to_string(k) + "_ps");
    }
    return names;
}

double GaussianPeaksModel::value(double x, const Eigen::VectorXd& p) const {
    double y = p(0);
    for (int k = 0; k < n_; ++k) {
        const double a = p(1 + 3 * k), mu = p(2 + 3 * k), s = p(3 + 3 * k);
        const double z = (x - mu) / s;
        y += a * std::exp(-0.5 * z * z);
    }
    return y;
}

void GaussianPeaksModel::gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) const {
    g(0) = 1.0;
    for (int k = 0; k < n_; ++k) {
        const double a = p(1 + 3 * k), mu = p(2 + 3 * k), s = p(3 + 3 * k);
        const double d = x - mu;
        const double e = std::exp(-0.5 * d * d / (s * s));
        g(1 + 3 * k) = e;
        g(2 + 3 * k) = a * e * d / (s * s);
        g(3 + 3 * k) = a * e * d * d / (s * s * s);
    }
}

double FringeModel::value(double x, const Eigen::VectorXd& p) const {
    return p(0) * (1.0 + p(1) * std::cos(2.0 * x + p(2)));
}

void FringeModel::gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) const {
    const double c = std::cos(2.0 * x + p(2));
    const double s = std::sin(2.0 * x + p(2));
    g(0) = 1.0 + p(1) * c;
    g(1) = p(0) * c;
    g(2) = -p(0) * p(1) * s;
}

double FreePeriodFringeModel::value(double x, const Eigen::VectorXd& p) const {
    return p(0) * (1.0 + p(1) * std::cos(p(2) * x + p(3)));
}

void FreePeriodFringeModel::gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) const {
    const double c = std::cos(p(2) * x + p(3));
    const double s = std::sin(p(2) * x + p(3));
    g(0) = 1.0 + p(1) * c;
    g(1) = p(0) * c;
    g(2) = -p(0) * p(1) * s * x;
    g(3) = -p(0) * p(1) * s;
}

double BeatingModel::value(double x, const Eigen::VectorXd& p) const {
    return p(0) * (1.0 - p(1) * sinc(sigma_ * x) * std::cos(kTwoPi * p(2) * x + p(3)));
}

void BeatingModel::gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) const {
    const double env = sinc(sigma_ * x);
    const double arg = kTwoPi * p(2) * x + p(3);
    const double c = std::cos(arg);
    const double s = std::sin(arg);
    g(0) = 1.0 - p(1) * env * c;
    g(1) = -p(0) * env * c;
    g(2) = p(0) * p(1) * env * s * kTwoPi * x;
    g(3) = p(0) * p(1) * env * s;
}

double FitResult::param(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
        throw std::out_of_range("no fit parameter '" + name + "'");
    return params(it - names.begin());
}

double FitResult::error(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
        throw std::out_of_range("no fit parameter '" + name + "'");
    return errors(it - names.begin());
}

std::vector<double> poisson_weights(std::span<const double> counts) {
    std::vector<double> w(counts.size());
    std::transform(counts.begin(), counts.end(), w.begin(), [](double c) { return 1.0 / std::max(c, 1.0); });
    return w;
}

FitResult levenberg_marquardt(const FitModel& model, std::span<const double> x, std::span<const double> y,
                              std::span<const double> w, const Eigen::VectorXd& start, const FitOptions& opts) {
    require_same_size(x, y, "levenberg_marquardt");
    require_same_size(x, w, "levenberg_marquardt");
    const Eigen::Index np = model.size();
    if (start.size() != np)
        throw std::invalid_argument("levenberg_marquardt: wrong number of start parameters");
    const auto n = static_cast<Eigen::Index>(x.size());
    if (n < np)
        throw std::invalid_argument("levenberg_marquardt: fewer points than parameters");

    FitResult r;
    r.model = model.name();
    r.names = model.parameter_names();
    r.dof = static_cast<int>(n - np);

    Eigen::VectorXd p = start;
    Eigen::MatrixXd jac(n, np);
    Eigen::VectorXd resid(n);
    Eigen::VectorXd g(np);

    auto linearize = [&](const Eigen::VectorXd& at) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            model.gradient(x[k], at, g);
            const double sw = std::sqrt(w[k]);
            jac.row(i) = sw * g.transpose();
            resid(i) = sw * (y[k] - model.value(x[k], at));
        }
    };

    double cost = weighted_cost(model, x, y, w, p);
    linearize(p);
    Eigen::MatrixXd jtj = jac.transpose() * jac;
    Eigen::VectorXd jtr = jac.transpose() * resid;
    double lambda = 1e-3 * jtj.diagonal().maxCoeff();
    if (!(lambda > 0.0))
        lambda = 1e-3;

    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        Eigen::MatrixXd a = jtj;
        for (Eigen::Index d = 0; d < np; ++d)
            a(d, d) += lambda * std::max(jtj(d, d), 1e-300);
        const Eigen::VectorXd step = a.ldlt().solve(jtr);
        const Eigen::VectorXd trial = p + step;
        const double trial_cost = weighted_cost(model, x, y, w, trial);
        const double rel_step = step.norm() / (p.norm() + opts.step_tolerance);

        if (std::isfinite(trial_cost) && trial_cost <= cost) {
            p = trial;
            cost = trial_cost;
            linearize(p);
            jtj = jac.transpose() * jac;
            jtr = jac.transpose() * resid;
            lambda = std::max(lambda / 3.0, 1e-15);
            if (rel_step < opts.step_tolerance) {
                r.converged = true;
                ++it;
                break;
            }
        } else {
            lambda *= 2.0;
            if (lambda > 1e16 || rel_step < opts.step_tolerance) {
                // No downhill step left at machine precision.
                r.converged = rel_step < 1e-8;
                if (!r.converged)
                    r.diagnostics = "damping diverged";
                ++it;
                break;
            }
        }
    }
    r.iterations = it;
    if (!r.converged && r.diagnostics.empty())
        r.diagnostics = "iteration cap reached";

    r.params = p;
    r.rss = cost;
    Eigen::MatrixXd cov = jtj.completeOrthogonalDecomposition().pseudoInverse();
    r.covariance = 0.5 * (cov + cov.transpose());
    r.errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return r;
}

FitResult fit_gaussian_peaks(const CoincidenceHistogram& h, int n_peaks, const FitOptions& opts) {
    if (n_peaks < 1)
        throw std::invalid_argument("fit_gaussian_peaks: n_peaks must be >= 1");
    const std::size_t nonempty =
        static_cast<std::size_t>(std::count_if(h.counts.begin(), h.counts.end(), [](auto c) { return c > 0; }));
    if (nonempty < static_cast<std::size_t>(3 * n_peaks + 1))
        throw std::invalid_argument("fit_gaussian_peaks: not enough populated bins");

    const std::size_t n = h.size();
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = h.center(i) * 1e12;
        ys[i] = static_cast<double>(h.counts[i]);
    }

    // 5-bin boxcar to stop single-bin noise posing as maxima.
    std::vector<double> smooth(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= 2 ? i - 2 : 0;
        const std::size_t hi = std::min(n - 1, i + 2);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j)
            s += ys[j];
        smooth[i] = s / static_cast<double>(hi - lo + 1);
    }
    std::vector<double> sorted = smooth;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 4), sorted.end());
    const double floor_level = sorted[n / 4];

    struct Candidate {
        std::size_t index;
        double height;
        double half_width;  // bins
    };
    std::vector<Candidate> maxima;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (smooth[i] >= smooth[i - 1] && smooth[i] > smooth[i + 1] && smooth[i] > floor_level) {
            const double half = floor_level + 0.5 * (smooth[i] - floor_level);
            std::size_t l = i, r = i;
            while (l > 0 && smooth[l] > half)
                --l;
            while (r + 1 < n && smooth[r] > half)
                ++r;
            maxima.push_back({i, smooth[i] - floor_level, 0.5 * static_cast<double>(r - l)});
        }
    }
    std::sort(maxima.begin(), maxima.end(), [](const auto& a, const auto& b) { return a.height > b.height; });
    std::vector<Candidate> chosen;
    for (const auto& c : maxima) {
        const bool clear = std::all_of(chosen.begin(), chosen.end(), [&](const Candidate& o) {
            const double gap = std::abs(static_cast<double>(c.index) - static_cast<double>(o.index));
            return gap > std::max(2.0, o.half_width);
        });
        if (clear)
            chosen.push_back(c);
        if (chosen.size() == static_cast<std::size_t>(n_peaks))
            break;
    }
    if (chosen.size() < static_cast<std::size_t>(n_peaks))
        throw std::invalid_argument("fit_gaussian_peaks: found fewer local maxima than requested peaks");
    std::sort(chosen.begin(), chosen.end(), [](const auto& a, const auto& b) { return a.index < b.index; });

    GaussianPeaksModel model(n_peaks);
    Eigen::VectorXd start(model.size());
    start(0) = floor_level;
    const double bin_ps = h.bin_width * 1e12;
    for (int k = 0; k < n_peaks; ++k) {
        const auto& c = chosen[static_cast<std::size_t>(k)];
        start(1 + 3 * k) = c.height;
        start(2 + 3 * k) = xs[c.index];
        start(3 + 3 * k) = std::max(bin_ps, c.half_width * bin_ps / std::sqrt(2.0 * std::log(2.0)));
    }
    const std::vector<double> w = poisson_weights(ys);
    FitResult r = levenberg_marquardt(model, xs, ys, w, start, opts);
    for (int k = 0; k < n_peaks; ++k)
        r.params(3 + 3 * k) = std::abs(r.params(3 + 3 * k));
    return r;
}

double fitted_fwhm(const FitResult& r, int k) { return kFwhmPerSigma * r.params(3 + 3 * k) * 1e-12; }

double fitted_center(const FitResult& r, int k) { return r.params(2 + 3 * k) * 1e-12; }

namespace {

void check_fringe_input(std::span<const double> phis, std::span<const double> counts, double period) {
    require_same_size(phis, counts, "fit_fringe");
    if (phis.size() < 6)
        throw std::invalid_argument("fit_fringe: need at least 6 points");
    const auto [lo, hi] = std::minmax_element(phis.begin(), phis.end());
    const double n = static_cast<double>(phis.size());
    // A uniform grid of n points covers span * n / (n - 1) of phase.
    if ((*hi - *lo) * n / (n - 1.0) < period * (1.0 - 1e-9))
        throw std::invalid_argument("fit_fringe: points span less than one period");
}

// Starting point from the linear model c0 + a cos(k phi) + b sin(k phi).
Eigen::Vector3d fringe_start(std::span<const double> phis, std::span<const double> counts, std::span<const double> w,
                             double k) {
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(phis.size()), 3);
    for (std::size_t i = 0; i < phis.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        basis(r, 0) = 1.0;
        basis(r, 1) = std::cos(k * phis[i]);
        basis(r, 2) = std::sin(k * phis[i]);
    }
    const Eigen::VectorXd c = linear_fit(basis, counts, w);
    const double amp = c(0) != 0.0 ? c(0) : 1.0;
    return {amp, std::hypot(c(1), c(2)) / amp, std::atan2(-c(2), c(1))};
}

}  // namespace

FitResult fit_fringe(std::span<const double> phis, std::span<const double> counts, const FitOptions& opts) {
    check_fringe_input(phis, counts, kPi);
    const std::vector<double> w = poisson_weights(counts);
    const Eigen::Vector3d start = fringe_start(phis, counts, w, 2.0);
    FitResult r = levenberg_marquardt(FringeModel{}, phis, counts, w, Eigen::VectorXd(start), opts);
    finish_visibility(r, 1, 2);
    return r;
}

FitResult fit_fringe_free_period(std::span<const double> phis, std::span<const double> counts, double period_hint,
                                 const FitOptions& opts) {
    if (!(period_hint > 0.0))
        throw std::invalid_argument("fit_fringe_free_period: period hint must be positive");
    check_fringe_input(phis, counts, period_hint);
    const std::vector<double> w = poisson_weights(counts);
    const double k = kTwoPi / period_hint;
    const Eigen::Vector3d s = fringe_start(phis, counts, w, k);
    Eigen::VectorXd start(4);
    start << s(0), s(1), k, s(2);
    FitResult r = levenberg_marquardt(FreePeriodFringeModel{}, phis, counts, w, start, opts);
    finish_visibility(r, 1, 3);
    return r;
}

FitResult fit_beating(std::span<const double> delta_taus, std::span<const double> counts, const BeatingConfig& cfg,
                      const FitOptions& opts) {
    require_same_size(delta_taus, counts, "fit_beating");
    const double sigma_ps = cfg.sigma * 1e-12;
    const double first_zero_ps = kPi / sigma_ps;
    std::vector<double> xs(delta_taus.size());
    std::transform(delta_taus.begin(), delta_taus.end(), xs.begin(), [](double t) { return t * 1e12; });
    const auto in_lobe = std::count_if(xs.begin(), xs.end(), [&](double x) { return std::abs(x) < first_zero_ps; });
    if (in_lobe < 8)
        throw std::invalid_argument("fit_beating: need at least 8 points inside the first envelope lobe");

    const double f = cfg.beat_frequency() * 1e-12;
    const std::vector<double> w = poisson_weights(counts);
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(xs.size()), 3);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double env = sinc(sigma_ps * xs[i]);
        basis(r, 0) = 1.0;
        basis(r, 1) = -env * std::cos(kTwoPi * f * xs[i]);
        basis(r, 2) = env * std::sin(kTwoPi * f * xs[i]);
    }
    const Eigen::VectorXd c = linear_fit(basis, counts, w);
    const double amp = c(0) != 0.0 ? c(0) : 1.0;
    Eigen::VectorXd start(4);
    start << amp, std::hypot(c(1), c(2)) / amp, f, std::atan2(c(2), c(1));

    FitResult r = levenberg_marquardt(BeatingModel(sigma_ps), xs, counts, w, start, opts);
    finish_visibility(r, 1, 3);
    return r;
}

OffRatio off_ratio_db(double max_counts, double min_counts) {
    if (!(max_counts > 0.0))
        throw std::domain_error("off_ratio_db: max_counts must be positive");
    if (min_counts < 0.0 || max_counts < min_counts)
        throw std::domain_error("off_ratio_db: need 0 <= min_counts <= max_counts");
    if (min_counts == 0.0)
        return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(), true};
    const double db = 10.0 * std::log10(max_counts / min_counts);
    const double err = 10.0 / std::log(10.0) * std::sqrt(1.0 / max_counts + 1.0 / min_counts);
    return {db, err, false};
}

double visibility_off_ratio_db(double visibility) {
    if (!(visibility >= 0.0 && visibility < 1.0))
        throw std::domain_error("visibility_off_ratio_db: visibility must lie in [0, 1)");
    return 10.0 * std::log10((1.0 + visibility) / (1.0 - visibility));
}

FlatnessTest chi_square_constant(std::span<const double> counts) {
    if (counts.size() < 2)
        throw std::invalid_argument("chi_square_constant: need at least two points");
    FlatnessTest t;
    t.mean = std::accumulate(counts.begin(), counts.end(), 0.0) / static_cast<double>(counts.size());
    t.dof = static_cast<int>(counts.size()) - 1;
    if (!(t.mean > 0.0))
        return t;
    for (double c : counts)
        t.chi2 += (c - t.mean) * (c - t.mean) / t.mean;
    boost::math::chi_squared dist(t.dof);
    t.p_value = boost::math::cdf(boost::math::complement(dist, t.chi2));
    return t;
}

void to_json(nlohmann::json& j, const FlatnessTest& t) {
    j = nlohmann::json{{"mean", t.mean}, {"chi2", t.chi2}, {"dof", t.dof}, {"p_value", t.p_value},
                       {"passes_95", t.passes()}};
}

void to_json(nlohmann::json& j, const FitResult& r) {
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json errors = nlohmann::json::object();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        params[r.names[i]] = r.params(static_cast<Eigen::Index>(i));
        errors[r.names[i]] = r.errors(static_cast<Eigen::Index>(i));
    }
    j = nlohmann::json{{"model", r.model},   {"params", params},           {"errors", errors},
                       {"rss", r.rss},       {"dof", r.dof},               {"converged", r.converged},
                       {"iterations", r.iterations}};
    if (r.model != "gaussian_peaks") {
        j["visibility"] = r.visibility;
        j["visibility_error"] = r.visibility_error;
        j["raw_visibility"] = r.raw_visibility;
    }
    if (!r.diagnostics.empty())
        j["diagnostics"] = r.diagnostics;
}

}  // namespace umzi
