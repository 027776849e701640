#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "umzi/coincidence.hpp"
#include "umzi/spatial_beating.hpp"

namespace umzi {

/// A scalar model y(x; p) with an analytic gradient in p.
class FitModel {
public:
    virtual ~FitModel() = default;
    virtual std::string name() const = 0;
    virtual std::vector<std::string> parameter_names() const = 0;
    virtual double value(double x, const Eigen::VectorXd& p) const = 0;
    virtual void gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad) const = 0;

    Eigen::Index size() const { return static_cast<Eigen::Index>(parameter_names().size()); }
};

/// baseline + sum_k A_k exp(-(x - mu_k)^2 / (2 s_k^2)); x in ps.
/// Parameters: baseline, then (amplitude_k, center_k_ps, sigma_k_ps) per peak.
class GaussianPeaksModel final : public FitModel {
public:
    explicit GaussianPeaksModel(int n_peaks);
    std::string name() const override { return "gaussian_peaks"; }
    std::vector<std::string> parameter_names() const override;
    double value(double x, const Eigen::VectorXd& p) const override;
    void gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad) const override;
    int peaks() const { return n_; }

private:
    int n_;
};

/// A (1 + V cos(2 phi + delta)); period pi in phi.
class FringeModel final : public FitModel {
public:
    std::string name() const override { return "fringe"; }
    std::vector<std::string> parameter_names() const override { return {"amplitude", "visibility", "phase"}; }
    double value(double x, const Eigen::VectorXd& p) const override;
    void gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad) const override;
};

/// A (1 + V cos(k phi + delta)) with free angular wavenumber k. Diagnostic.
class FreePeriodFringeModel final : public FitModel {
public:
    std::string name() const override { return "fringe_free_period"; }
    std::vector<std::string> parameter_names() const override {
        return {"amplitude", "visibility", "wavenumber", "phase"};
    }
    double value(double x, const Eigen::VectorXd& p) const override;
    void gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad) const override;
};

/// A (1 - V sinc(sigma x) cos(2 pi f x + delta)); x in ps, f in THz, sigma in
/// rad/ps and held fixed.
class BeatingModel final : public FitModel {
public:
    explicit BeatingModel(double sigma_rad_per_ps) : sigma_(sigma_rad_per_ps) {}
    std::string name() const override { return "beating"; }
    std::vector<std::string> parameter_names() const override {
        return {"amplitude", "visibility", "frequency_thz", "phase"};
    }
    double value(double x, const Eigen::VectorXd& p) const override;
    void gradient(double x, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad) const override;
    double sigma() const { return sigma_; }

private:
    double sigma_;
};

struct FitOptions {
    int max_iterations = 200;
    double step_tolerance = 1e-10;  // relative parameter step
};

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    Eigen::VectorXd params;
    Eigen::VectorXd errors;  // 1 sigma from the covariance diagonal
    Eigen::MatrixXd covariance;
    double visibility = 0.0;        // clamped to [0, 1] (fringe models)
    double visibility_error = 0.0;
    double raw_visibility = 0.0;
    double rss = 0.0;               // weighted
    int dof = 0;
    bool converged = false;
    int iterations = 0;
    std::string diagnostics;

    double param(const std::string& name) const;
    double error(const std::string& name) const;
    /// Chi-square per degree of freedom under the Poisson weights.
    double reduced_chi2() const { return dof > 0 ? rss / dof : 0.0; }
};

/// FWHM of a Gaussian in units of its standard deviation.
inline constexpr double kFwhmPerSigma = 2.3548200450309493;

/// Poisson weight 1 / max(count, 1).
std::vector<double> poisson_weights(std::span<const double> counts);

/// Damped Gauss-Newton minimization of sum_i w_i (y_i - model(x_i))^2.
FitResult levenberg_marquardt(const FitModel& model, std::span<const double> x, std::span<const double> y,
                              std::span<const double> w, const Eigen::VectorXd& start, const FitOptions& opts = {});

/// Multi-Gaussian fit of a coincidence histogram; starts from the n_peaks
/// largest local maxima of the lightly smoothed counts.
FitResult fit_gaussian_peaks(const CoincidenceHistogram& h, int n_peaks, const FitOptions& opts = {});

/// FWHM in seconds of peak k (0-based) of a fit_gaussian_peaks() result.
double fitted_fwhm(const FitResult& r, int k);
double fitted_center(const FitResult& r, int k);

/// Routing fringe with the period fixed at pi.
FitResult fit_fringe(std::span<const double> phis, std::span<const double> counts, const FitOptions& opts = {});

/// Routing fringe with a free period, seeded at `period_hint` (rad).
FitResult fit_fringe_free_period(std::span<const double> phis, std::span<const double> counts, double period_hint,
                                 const FitOptions& opts = {});

/// Beating fringe; sigma is taken from `cfg`, the frequency is seeded at its
/// beat frequency. `delta_taus` in seconds.
FitResult fit_beating(std::span<const double> delta_taus, std::span<const double> counts, const BeatingConfig& cfg,
                      const FitOptions& opts = {});

struct OffRatio {
    double db = 0.0;
    double error_db = 0.0;
    bool infinite = false;
};

/// 10 log10(max / min) with Poisson error propagation.
OffRatio off_ratio_db(double max_counts, double min_counts);

/// Off-ratio implied by a fringe visibility, 10 log10((1 + V) / (1 - V)).
double visibility_off_ratio_db(double visibility);

struct FlatnessTest {
    double mean = 0.0;
    double chi2 = 0.0;
    int dof = 0;
    double p_value = 1.0;
    bool passes(double alpha = 0.05) const { return p_value >= alpha; }
};

/// Pearson chi-square of Poisson counts against their own mean.
FlatnessTest chi_square_constant(std::span<const double> counts);

void to_json(nlohmann::json& j, const FitResult& r);
void to_json(nlohmann::json& j, const FlatnessTest& t);

}  // namespace umzi
