#include "deplab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "deplab/common.hpp"

namespace deplab {

namespace {

constexpr double kEps = 3e-15;
constexpr double kTiny = 1e-300;

// Regularized lower incomplete gamma by series expansion, for x < a + 1.
double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kEps) {
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    fail(ErrorKind::numeric, "incomplete gamma series did not converge");
}

// Regularized upper incomplete gamma by continued fraction, for x >= a + 1.
double gamma_q_cf(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) {
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
        }
    }
    fail(ErrorKind::numeric, "incomplete gamma fraction did not converge");
}

double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) fail(ErrorKind::invalid_argument, "bad incomplete gamma arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
    return gamma_q_cf(a, x);
}

// Continued fraction for the regularized incomplete beta function.
double betacf(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    fail(ErrorKind::numeric, "incomplete beta fraction did not converge");
}

double beta_inc(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) fail(ErrorKind::invalid_argument, "incomplete beta needs x in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

void check_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.cols() < 1) fail(ErrorKind::invalid_argument, "design matrix has no columns");
    if (y.size() != X.rows()) {
        fail(ErrorKind::invalid_argument, "response length does not match design rows");
    }
    if (X.rows() <= X.cols()) {
        fail(ErrorKind::invalid_argument, "need more observations than coefficients");
    }
    if (!X.allFinite() || !y.allFinite()) {
        fail(ErrorKind::invalid_argument, "design and response must be finite");
    }
}

// Per-group sufficient statistics for the random-intercept likelihood.
struct GroupStats {
    long ni = 0;
    Eigen::MatrixXd xtx;
    Eigen::VectorXd xty;
    Eigen::VectorXd xsum;
    double ysum = 0.0;
    double yty = 0.0;
};

struct ProfilePoint {
    Eigen::VectorXd beta;
    Eigen::MatrixXd a;  // sum of X' W X over groups
    double rss_w = 0.0;
    double logdet_v = 0.0;
    double loglik = 0.0;
};

ProfilePoint eval_profile(const std::vector<GroupStats>& gs, double psi, long n, int p,
                          bool reml) {
    ProfilePoint pt;
    pt.a = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (const GroupStats& g : gs) {
        const double c = psi / (1.0 + static_cast<double>(g.ni) * psi);
        pt.a += g.xtx - c * (g.xsum * g.xsum.transpose());
        rhs += g.xty - c * g.ysum * g.xsum;
        pt.logdet_v += std::log1p(static_cast<double>(g.ni) * psi);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(pt.a);
    pt.beta = ldlt.solve(rhs);
    double logdet_a = 0.0;
    for (int i = 0; i < p; ++i) {
        const double d = ldlt.vectorD()(i);
        if (d <= 0.0) fail(ErrorKind::numeric, "weighted normal equations are not positive");
        logdet_a += std::log(d);
    }
    for (const GroupStats& g : gs) {
        const double c = psi / (1.0 + static_cast<double>(g.ni) * psi);
        const double rtr = g.yty - 2.0 * pt.beta.dot(g.xty) + pt.beta.dot(g.xtx * pt.beta);
        const double rsum = g.ysum - g.xsum.dot(pt.beta);
        pt.rss_w += rtr - c * rsum * rsum;
    }
    if (pt.rss_w <= 0.0) fail(ErrorKind::numeric, "weighted residual sum of squares vanished");
    const double nd = static_cast<double>(n);
    const double pd = static_cast<double>(p);
    if (reml) {
        const double s2 = pt.rss_w / (nd - pd);
        pt.loglik = -0.5 * ((nd - pd) * std::log(2.0 * M_PI * s2) + pt.logdet_v + logdet_a +
                            (nd - pd));
    } else {
        const double s2 = pt.rss_w / nd;
        pt.loglik = -0.5 * (nd * std::log(2.0 * M_PI * s2) + pt.logdet_v + nd);
    }
    return pt;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double chi2_sf(double x, double df) {
    if (df <= 0.0) fail(ErrorKind::invalid_argument, "degrees of freedom must be positive");
    if (x < 0.0) fail(ErrorKind::invalid_argument, "chi-squared statistic must be nonnegative");
    return gamma_q(df / 2.0, x / 2.0);
}

double student_t_sf(double t, double df) {
    if (df <= 0.0) fail(ErrorKind::invalid_argument, "degrees of freedom must be positive");
    if (t < 0.0) return 1.0 - student_t_sf(-t, df);
    return 0.5 * beta_inc(df / 2.0, 0.5, df / (df + t * t));
}

OlsFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_design(X, y);
    OlsFit fit;
    fit.n = X.rows();
    fit.p = static_cast<int>(X.cols());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < fit.p) fail(ErrorKind::numeric, "design matrix is rank deficient");
    fit.beta = qr.solve(y);
    fit.fitted = X * fit.beta;
    fit.residuals = y - fit.fitted;
    fit.rss = fit.residuals.squaredNorm();
    fit.sigma2 = fit.rss / static_cast<double>(fit.n - fit.p);
    Eigen::MatrixXd xtx_inv =
        (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(fit.p, fit.p));
    fit.se = (fit.sigma2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
    const double s2_ml = fit.rss / static_cast<double>(fit.n);
    fit.loglik = s2_ml > 0.0
                     ? -0.5 * static_cast<double>(fit.n) * (std::log(2.0 * M_PI * s2_ml) + 1.0)
                     : std::numeric_limits<double>::infinity();
    return fit;
}

MixedFit fit_mixed_model(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<std::string>& groups, bool reml) {
    check_design(X, y);
    const long n = X.rows();
    const int p = static_cast<int>(X.cols());
    if (static_cast<long>(groups.size()) != n) {
        fail(ErrorKind::invalid_argument, "group labels do not match design rows");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) fail(ErrorKind::numeric, "design matrix is rank deficient");

    std::map<std::string, std::vector<int>> by_group;
    for (long i = 0; i < n; ++i) by_group[groups[i]].push_back(static_cast<int>(i));

    std::vector<GroupStats> gs;
    bool all_singleton = true;
    for (const auto& [label, rows] : by_group) {
        GroupStats g;
        g.ni = static_cast<long>(rows.size());
        if (g.ni > 1) all_singleton = false;
        Eigen::MatrixXd xi(g.ni, p);
        Eigen::VectorXd yi(g.ni);
        for (long k = 0; k < g.ni; ++k) {
            xi.row(k) = X.row(rows[static_cast<size_t>(k)]);
            yi(k) = y(rows[static_cast<size_t>(k)]);
        }
        g.xtx = xi.transpose() * xi;
        g.xty = xi.transpose() * yi;
        g.xsum = xi.colwise().sum().transpose();
        g.ysum = yi.sum();
        g.yty = yi.squaredNorm();
        gs.push_back(std::move(g));
    }

    MixedFit fit;
    fit.reml = reml;
    fit.n_obs = n;
    fit.n_groups = static_cast<int>(gs.size());
    fit.p = p;

    double psi_hat = 0.0;
    if (all_singleton) {
        fit.ols_fallback = true;
    } else {
        std::vector<double> grid;
        grid.push_back(0.0);
        for (int k = 0; k <= 120; ++k) grid.push_back(std::pow(10.0, -8.0 + 0.1 * k));
        size_t best = 0;
        double best_ll = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < grid.size(); ++i) {
            const double ll = eval_profile(gs, grid[i], n, p, reml).loglik;
            if (ll > best_ll) {
                best_ll = ll;
                best = i;
            }
        }
        double lo = best > 0 ? grid[best - 1] : 0.0;
        double hi = best + 1 < grid.size() ? grid[best + 1] : grid.back();
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double c1 = hi - gr * (hi - lo);
        double c2 = lo + gr * (hi - lo);
        double f1 = eval_profile(gs, c1, n, p, reml).loglik;
        double f2 = eval_profile(gs, c2, n, p, reml).loglik;
        int iter = 0;
        while (hi - lo > 1e-10 * std::max(1.0, hi)) {
            if (++iter > 500) {
                fail(ErrorKind::numeric, "variance ratio search did not converge");
            }
            if (f1 < f2) {
                lo = c1;
                c1 = c2;
                f1 = f2;
                c2 = lo + gr * (hi - lo);
                f2 = eval_profile(gs, c2, n, p, reml).loglik;
            } else {
                hi = c2;
                c2 = c1;
                f2 = f1;
                c1 = hi - gr * (hi - lo);
                f1 = eval_profile(gs, c1, n, p, reml).loglik;
            }
        }
        psi_hat = 0.5 * (lo + hi);
        if (eval_profile(gs, 0.0, n, p, reml).loglik >=
            eval_profile(gs, psi_hat, n, p, reml).loglik) {
            psi_hat = 0.0;
        }
    }

    ProfilePoint pt = eval_profile(gs, psi_hat, n, p, reml);
    fit.psi = psi_hat;
    fit.beta = pt.beta;
    fit.sigma2_e = pt.rss_w / static_cast<double>(reml ? n - p : n);
    fit.sigma2_b = psi_hat * fit.sigma2_e;
    fit.loglik = pt.loglik;
    Eigen::MatrixXd a_inv = pt.a.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.se = (fit.sigma2_e * a_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
    return fit;
}

LrtResult likelihood_ratio_test(const MixedFit& null_fit, const MixedFit& alt_fit, int df) {
    if (df < 1) fail(ErrorKind::invalid_argument, "test needs at least one degree of freedom");
    if (null_fit.reml || alt_fit.reml) {
        fail(ErrorKind::invalid_argument,
             "likelihood ratio tests need maximum likelihood fits, not REML");
    }
    if (null_fit.n_obs != alt_fit.n_obs) {
        fail(ErrorKind::invalid_argument, "fits were made on different numbers of observations");
    }
    LrtResult r;
    r.df = df;
    r.chi2 = std::max(0.0, 2.0 * (alt_fit.loglik - null_fit.loglik));
    r.p_value = chi2_sf(r.chi2, df);
    return r;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (v[a] != v[b]) return v[a] < v[b];
        return a < b;
    });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) fail(ErrorKind::invalid_argument, "paired samples differ in length");
    const size_t n = x.size();
    if (n < 3) fail(ErrorKind::invalid_argument, "need at least three pairs");
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            fail(ErrorKind::invalid_argument, "samples must be finite");
        }
    }
    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);
    const double mean = 0.5 * static_cast<double>(n + 1);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) fail(ErrorKind::numeric, "a sample is constant");
    SpearmanResult r;
    r.n = static_cast<long>(n);
    r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(n - 2);
    const double denom = 1.0 - r.rho * r.rho;
    if (denom <= 0.0) {
        r.p_value = 0.0;
    } else {
        const double t = std::fabs(r.rho) * std::sqrt(df / denom);
        r.p_value = std::min(1.0, 2.0 * student_t_sf(t, df));
    }
    return r;
}

Crossover crossover(double intercept, double slope) {
    if (!std::isfinite(intercept) || !std::isfinite(slope)) {
        fail(ErrorKind::invalid_argument, "coefficients must be finite");
    }
    if (slope == 0.0) fail(ErrorKind::numeric, "a flat trend never crosses zero");
    Crossover c;
    c.log10_sentences = -intercept / slope;
    const double sentences = std::pow(10.0, c.log10_sentences);
    if (!std::isfinite(sentences) || sentences >= 9.2e18) {
        fail(ErrorKind::numeric, "crossing point is out of range");
    }
    c.sentences = std::llround(sentences);
    return c;
}

PartialRegression partial_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                     int focal) {
    check_design(X, y);
    const long n = X.rows();
    const int p = static_cast<int>(X.cols());
    if (focal < 0 || focal >= p) fail(ErrorKind::invalid_argument, "focal column out of range");

    Eigen::VectorXd xr, yr;
    if (p == 1) {
        xr = X.col(0);
        yr = y;
    } else {
        Eigen::MatrixXd rest(n, p - 1);
        int c = 0;
        for (int j = 0; j < p; ++j) {
            if (j != focal) rest.col(c++) = X.col(j);
        }
        xr = fit_ols(rest, X.col(focal)).residuals;
        yr = fit_ols(rest, y).residuals;
    }
    const double denom = xr.squaredNorm();
    if (denom <= 1e-10 * X.col(focal).squaredNorm()) {
        fail(ErrorKind::numeric, "focal column is collinear with the rest");
    }

    PartialRegression out;
    out.slope = xr.dot(yr) / denom;
    out.x_residuals.assign(xr.data(), xr.data() + n);
    out.y_residuals.assign(yr.data(), yr.data() + n);
    return out;
}

}  // namespace deplab
