#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace deplab {

double normal_cdf(double x);

// Upper tail of the chi-squared distribution with df degrees of freedom.
double chi2_sf(double x, double df);

// Upper tail of Student's t distribution.
double student_t_sf(double t, double df);

struct OlsFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    Eigen::VectorXd fitted;
    Eigen::VectorXd residuals;
    double rss = 0.0;
    double sigma2 = 0.0;  // RSS / (n - p)
    double loglik = 0.0;  // maximum likelihood
    long n = 0;
    int p = 0;
};

OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Linear model with one random intercept per group, fit by profiling the
// likelihood over the variance ratio psi = sigma2_b / sigma2_e.  When every
// group holds a single observation the ratio is unidentifiable and the fit
// degrades to ordinary least squares, flagged by ols_fallback.
struct MixedFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    double sigma2_e = 0.0;
    double sigma2_b = 0.0;
    double psi = 0.0;
    double loglik = 0.0;  // ML or REML criterion, matching `reml`
    bool reml = false;
    bool ols_fallback = false;
    long n_obs = 0;
    int n_groups = 0;
    int p = 0;
};

MixedFit fit_mixed_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<std::string>& groups, bool reml);

struct LrtResult {
    double chi2 = 0.0;
    int df = 0;
    double p_value = 1.0;
};

// Both fits must use maximum likelihood; REML criteria of models with
// different fixed effects are not comparable.
LrtResult likelihood_ratio_test(const MixedFit& null_fit, const MixedFit& alt_fit, int df);

struct SpearmanResult {
    double rho = 0.0;
    double p_value = 1.0;
    long n = 0;
};

// Rank correlation with average ranks for ties; two-sided p-value from the
// t approximation.
SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y);

struct Crossover {
    double log10_sentences = 0.0;
    long long sentences = 0;
};

// Training-set size at which a fitted trend y = intercept + slope * log10(n)
// crosses zero.
Crossover crossover(double intercept, double slope);

struct PartialRegression {
    std::vector<double> x_residuals;
    std::vector<double> y_residuals;
    double slope = 0.0;
};

// Residualizes y and column `focal` of X against the remaining columns;
// the slope of the residual-on-residual fit equals the full-model
// coefficient of the focal column.
PartialRegression partial_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     int focal);

}  // namespace deplab
