#include "cohortforge/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cohortforge {

using json = nlohmann::ordered_json;

namespace {

constexpr double kZ95 = 1.959963984540054;

double quantile(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double sample_sd(const std::vector<double>& v)
{
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

} // namespace

FitResult fit_logistic(const Mat2D& X, const Vec1D& y, const Vec1D& weights, const Vec1D& init)
{
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (y.size() != n) throw DomainError("fit_logistic: response length does not match design rows");
    for (Eigen::Index i = 0; i < n; ++i)
        if (y(i) != 0.0 && y(i) != 1.0)
            throw DomainError("fit_logistic: response must be 0/1");
    Vec1D w = weights.size() ? weights : Vec1D::Ones(n);
    if (w.size() != n) throw DomainError("fit_logistic: weight length does not match design rows");

    {
        Mat2D xtx = X.transpose() * X;
        Eigen::FullPivLU<Mat2D> lu(xtx);
        lu.setThreshold(1e-10);
        if (lu.rank() < p) throw DomainError("fit_logistic: design matrix is rank deficient");
    }

    FitResult fit;
    fit.coef = init.size() == p ? init : Vec1D::Zero(p);

    auto log_lik = [&](const Vec1D& beta) {
        Vec1D eta = X * beta;
        double ll = 0;
        for (Eigen::Index i = 0; i < n; ++i) ll += w(i) * (y(i) * eta(i) - log1pexp(eta(i)));
        return ll;
    };

    double ll = log_lik(fit.coef);
    Mat2D info(p, p);
    const int max_iter = 50;
    bool ll_stable = false; // require two consecutive sub-tolerance changes
    for (int it = 1; it <= max_iter; ++it) {
        fit.iterations = it;
        Vec1D eta = X * fit.coef;
        Vec1D mu(n), wvar(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu(i) = expit(eta(i));
            double v = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
            wvar(i) = w(i) * v;
        }
        Vec1D score = X.transpose() * (w.array() * (y - mu).array()).matrix();
        info = X.transpose() * wvar.asDiagonal() * X;
        if (score.cwiseAbs().maxCoeff() < 1e-8) {
            fit.converged = true;
            break;
        }
        Vec1D step = info.ldlt().solve(score);
        double new_ll = log_lik(fit.coef + step);
        int halvings = 0;
        while (new_ll < ll && halvings < 15) {
            step *= 0.5;
            new_ll = log_lik(fit.coef + step);
            ++halvings;
        }
        fit.coef += step;
        if (fit.coef.cwiseAbs().maxCoeff() > 30.0) break; // separation guard
        double rel = std::abs(new_ll - ll) / (std::abs(ll) + 1e-300);
        ll = new_ll;
        if (rel < 1e-10) {
            if (ll_stable) {
                fit.converged = true;
                break;
            }
            ll_stable = true;
        } else {
            ll_stable = false;
        }
    }
    // information at the final coefficients
    {
        Vec1D eta = X * fit.coef;
        Vec1D wvar(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double mu = expit(eta(i));
            wvar(i) = w(i) * std::max(mu * (1.0 - mu), 1e-12);
        }
        info = X.transpose() * wvar.asDiagonal() * X;
    }
    fit.log_lik = log_lik(fit.coef);
    fit.cov = info.ldlt().solve(Mat2D::Identity(p, p));
    return fit;
}

// ---------------------------------------------------------------------------
// design assembly

namespace {

void require_complete(const MultiCohortDataset& data, const std::vector<std::string>& cols)
{
    for (const std::string& name : cols) {
        int c = data.require_col(name);
        for (Eigen::Index r = 0; r < data.n_rows(); ++r)
            if (data.values(r, c) == kMissing)
                throw DomainError("column '" + name +
                                  "' has missing values; apply complete_case or multiple_impute first");
    }
}

// dummy expansion: a categorical column with L levels contributes L-1
// indicator columns (levels 1..L-1)
void append_dummies(Mat2D& X, Eigen::Index& at, const MultiCohortDataset& data, int col)
{
    int levels = data.columns[static_cast<std::size_t>(col)].n_levels();
    for (int lv = 1; lv < levels; ++lv) {
        for (Eigen::Index r = 0; r < data.n_rows(); ++r)
            X(r, at) = data.values(r, col) == lv ? 1.0 : 0.0;
        ++at;
    }
}

int covariate_width(const MultiCohortDataset& data, const std::vector<std::string>& covariates,
                    bool cohort_indicator)
{
    int width = 0;
    for (const std::string& name : covariates)
        width += data.columns[static_cast<std::size_t>(data.require_col(name))].n_levels() - 1;
    if (cohort_indicator) width += static_cast<int>(data.cohort_ids.size()) - 1;
    return width;
}

// covariate block only (no intercept, no arm terms)
Mat2D covariate_block(const MultiCohortDataset& data, const std::vector<std::string>& covariates,
                      bool cohort_indicator)
{
    Mat2D X(data.n_rows(), covariate_width(data, covariates, cohort_indicator));
    Eigen::Index at = 0;
    for (const std::string& name : covariates) append_dummies(X, at, data, data.require_col(name));
    if (cohort_indicator) {
        int n_cohorts = static_cast<int>(data.cohort_ids.size());
        for (int lv = 1; lv < n_cohorts; ++lv) {
            for (Eigen::Index r = 0; r < data.n_rows(); ++r) X(r, at) = data.cohort(r) == lv ? 1.0 : 0.0;
            ++at;
        }
    }
    return X;
}

struct ArmInfo {
    std::vector<int> value; // per row
    int n_arms = 2;
    std::vector<std::string> labels;
};

ArmInfo arm_info(const MultiCohortDataset& data, const std::string& exposure)
{
    int c = data.require_col(exposure);
    const Column& col = data.columns[static_cast<std::size_t>(c)];
    ArmInfo info;
    info.n_arms = col.n_levels();
    info.value.resize(static_cast<std::size_t>(data.n_rows()));
    for (Eigen::Index r = 0; r < data.n_rows(); ++r) {
        int v = data.values(r, c);
        if (v < 0 || v >= info.n_arms)
            throw DomainError("exposure '" + exposure + "' has out-of-range value");
        info.value[static_cast<std::size_t>(r)] = v;
    }
    for (int k = 0; k < info.n_arms; ++k)
        info.labels.push_back(col.levels.empty() ? std::to_string(k) : col.levels[static_cast<std::size_t>(k)]);
    return info;
}

Vec1D outcome_vector(const MultiCohortDataset& data, const std::string& outcome)
{
    int c = data.require_col(outcome);
    Vec1D y(data.n_rows());
    for (Eigen::Index r = 0; r < data.n_rows(); ++r) {
        int v = data.values(r, c);
        if (v != 0 && v != 1) throw DomainError("outcome '" + outcome + "' must be binary");
        y(r) = v;
    }
    return y;
}

Vec1D effective_weights(const MultiCohortDataset& data, const EstimatorOptions& opts)
{
    if (opts.base_weights.size() == 0) return Vec1D();
    if (opts.base_weights.size() != data.n_rows())
        throw DomainError("base_weights length does not match dataset rows");
    return opts.base_weights;
}

struct RiskSet {
    std::vector<double> risk; // per arm
    bool ok = true;
    int capped = 0; // propensity trims
};

double contrast_value(EffectMeasure measure, double p1, double p0)
{
    switch (measure) {
        case EffectMeasure::OddsRatio: return (p1 / (1 - p1)) / (p0 / (1 - p0));
        case EffectMeasure::RiskRatio: return p1 / p0;
        case EffectMeasure::RiskDifference: return p1 - p0;
    }
    return 0;
}

bool log_scale(EffectMeasure measure) { return measure != EffectMeasure::RiskDifference; }

using RiskFn = std::function<RiskSet(const MultiCohortDataset&, const Vec1D& base_weights, bool is_boot)>;

// shared reporting: contrasts per non-comparator arm with bootstrap SEs;
// external base weights are resampled together with the rows
std::vector<EffectEstimate> marginal_report(const MultiCohortDataset& data, const std::string& method,
                                            const ArmInfo& arms, const EstimatorOptions& opts,
                                            const RiskFn& risks_of,
                                            std::vector<std::string> extra_warnings = {})
{
    Vec1D base = effective_weights(data, opts);
    RiskSet full = risks_of(data, base, false);
    if (!full.ok) extra_warnings.push_back("non-convergence in point estimate");
    if (full.capped > 0)
        extra_warnings.push_back("propensity trimmed for " + std::to_string(full.capped) + " rows");

    std::vector<std::vector<double>> boot(static_cast<std::size_t>(arms.n_arms));
    int boot_failures = 0;
    if (opts.bootstrap > 0) {
        Rng master = Rng(opts.seed).derive(0xB001);
        const std::size_t n = static_cast<std::size_t>(data.n_rows());
        for (int b = 0; b < opts.bootstrap; ++b) {
            Rng rng = master.derive(static_cast<std::uint64_t>(b));
            std::vector<Eigen::Index> rows(n);
            for (auto& r : rows) r = static_cast<Eigen::Index>(rng.uniform_index(n));
            MultiCohortDataset re = data.filter_rows(rows);
            Vec1D re_base;
            if (base.size()) {
                re_base.resize(static_cast<Eigen::Index>(n));
                for (std::size_t i = 0; i < n; ++i) re_base(static_cast<Eigen::Index>(i)) = base(rows[i]);
            }
            RiskSet rs;
            try {
                rs = risks_of(re, re_base, true);
            } catch (const DomainError&) {
                rs.ok = false;
            }
            bool usable = rs.ok;
            if (usable && log_scale(opts.measure)) {
                for (int k = 0; k < arms.n_arms; ++k) {
                    double p = rs.risk[static_cast<std::size_t>(k)];
                    if (!(p > 0 && p < 1)) usable = false;
                }
            }
            if (!usable) {
                ++boot_failures;
                continue;
            }
            for (int k = 1; k < arms.n_arms; ++k) {
                double c = contrast_value(opts.measure, rs.risk[static_cast<std::size_t>(k)], rs.risk[0]);
                boot[static_cast<std::size_t>(k)].push_back(log_scale(opts.measure) ? std::log(c) : c);
            }
        }
    }
    if (boot_failures > 0)
        extra_warnings.push_back(std::to_string(boot_failures) + " bootstrap resamples failed");

    std::vector<EffectEstimate> out;
    for (int k = 1; k < arms.n_arms; ++k) {
        EffectEstimate e;
        e.measure = opts.measure;
        e.scope = EstimandScope::Marginal;
        e.arm = arms.labels[static_cast<std::size_t>(k)];
        e.method = method;
        e.n_used = data.n_rows();
        e.warnings = extra_warnings;
        double p1 = full.risk[static_cast<std::size_t>(k)];
        double p0 = full.risk[0];
        if (log_scale(opts.measure) && !(p1 > 0 && p1 < 1 && p0 > 0 && p0 < 1)) {
            e.warnings.push_back("degenerate risk estimate; contrast clamped");
            p1 = std::clamp(p1, 1e-10, 1.0 - 1e-10);
            p0 = std::clamp(p0, 1e-10, 1.0 - 1e-10);
        }
        e.point = contrast_value(opts.measure, p1, p0);
        if (log_scale(opts.measure)) {
            e.log_point = std::log(e.point);
            e.se_log = sample_sd(boot[static_cast<std::size_t>(k)]);
            if (std::isfinite(e.se_log)) {
                e.ci_low = std::exp(e.log_point - kZ95 * e.se_log);
                e.ci_high = std::exp(e.log_point + kZ95 * e.se_log);
            } else {
                e.ci_low = e.ci_high = std::numeric_limits<double>::quiet_NaN();
                e.se_log = std::numeric_limits<double>::quiet_NaN();
            }
        } else {
            e.log_point = std::numeric_limits<double>::quiet_NaN();
            e.se_log = sample_sd(boot[static_cast<std::size_t>(k)]);
            if (std::isfinite(e.se_log)) {
                e.ci_low = e.point - kZ95 * e.se_log;
                e.ci_high = e.point + kZ95 * e.se_log;
            } else {
                e.ci_low = e.ci_high = std::numeric_limits<double>::quiet_NaN();
            }
        }
        out.push_back(std::move(e));
    }
    return out;
}

// outcome design: intercept + arm dummies + covariates (+ arm x covariate)
Mat2D outcome_design(const MultiCohortDataset& data, const ArmInfo& arms, const Mat2D& covs,
                     bool interactions, int arm_override = -1)
{
    const Eigen::Index n = data.n_rows();
    const int arm_terms = arms.n_arms - 1;
    Eigen::Index p = 1 + arm_terms + covs.cols();
    if (interactions) p += static_cast<Eigen::Index>(arm_terms) * covs.cols();
    Mat2D X(n, p);
    X.col(0).setOnes();
    for (int k = 1; k < arms.n_arms; ++k) {
        for (Eigen::Index r = 0; r < n; ++r) {
            int a = arm_override >= 0 ? arm_override : arms.value[static_cast<std::size_t>(r)];
            X(r, k) = a == k ? 1.0 : 0.0;
        }
    }
    X.block(0, 1 + arm_terms, n, covs.cols()) = covs;
    if (interactions) {
        Eigen::Index at = 1 + arm_terms + covs.cols();
        for (int k = 1; k < arms.n_arms; ++k)
            for (Eigen::Index c = 0; c < covs.cols(); ++c, ++at)
                X.col(at) = X.col(k).cwiseProduct(covs.col(c));
    }
    return X;
}

// propensity of the received arm per row, one-vs-rest with normalization
// for more than two arms; reusable across bootstrap refits via warm starts
struct PropensityModel {
    std::vector<FitResult> fits; // binary: one fit; else one per arm
    bool converged = true;
};

PropensityModel fit_propensity(const Mat2D& W, const ArmInfo& arms, const Vec1D& base_w,
                               const PropensityModel* warm)
{
    PropensityModel model;
    if (arms.n_arms == 2) {
        Vec1D t(W.rows());
        for (Eigen::Index r = 0; r < W.rows(); ++r) t(r) = arms.value[static_cast<std::size_t>(r)] == 1;
        model.fits.push_back(fit_logistic(W, t, base_w, warm ? warm->fits[0].coef : Vec1D()));
        model.converged = model.fits[0].converged;
    } else {
        for (int k = 0; k < arms.n_arms; ++k) {
            Vec1D t(W.rows());
            for (Eigen::Index r = 0; r < W.rows(); ++r)
                t(r) = arms.value[static_cast<std::size_t>(r)] == k;
            model.fits.push_back(
                fit_logistic(W, t, base_w, warm ? warm->fits[static_cast<std::size_t>(k)].coef : Vec1D()));
            model.converged = model.converged && model.fits.back().converged;
        }
    }
    return model;
}

// P(arm = k | w) for all arms and rows
Mat2D propensity_matrix(const PropensityModel& model, const Mat2D& W, const ArmInfo& arms)
{
    Mat2D P(W.rows(), arms.n_arms);
    if (arms.n_arms == 2) {
        Vec1D eta = W * model.fits[0].coef;
        for (Eigen::Index r = 0; r < W.rows(); ++r) {
            P(r, 1) = expit(eta(r));
            P(r, 0) = 1.0 - P(r, 1);
        }
    } else {
        for (int k = 0; k < arms.n_arms; ++k) {
            Vec1D eta = W * model.fits[static_cast<std::size_t>(k)].coef;
            for (Eigen::Index r = 0; r < W.rows(); ++r) P(r, k) = expit(eta(r));
        }
        for (Eigen::Index r = 0; r < W.rows(); ++r) P.row(r) /= P.row(r).sum();
    }
    return P;
}

std::string describe_strata(const MultiCohortDataset& data, const std::vector<std::string>& covariates,
                            const std::vector<Eigen::Index>& rows)
{
    std::set<std::string> strata;
    for (Eigen::Index r : rows) {
        std::string s;
        for (const std::string& name : covariates) {
            int c = data.require_col(name);
            s += (s.empty() ? "" : ",") + name + "=" + std::to_string(data.values(r, c));
        }
        strata.insert(s.empty() ? "(none)" : s);
        if (strata.size() >= 8) break;
    }
    std::string out;
    for (const std::string& s : strata) out += (out.empty() ? "" : "; ") + s;
    return out;
}

} // namespace

std::vector<EffectEstimate> conditional_or(const MultiCohortDataset& data, const std::string& exposure,
                                           const std::string& outcome,
                                           const std::vector<std::string>& covariates,
                                           const EstimatorOptions& opts)
{
    std::vector<std::string> cols = covariates;
    cols.push_back(exposure);
    cols.push_back(outcome);
    require_complete(data, cols);

    ArmInfo arms = arm_info(data, exposure);
    Mat2D covs = covariate_block(data, covariates, opts.include_cohort_indicator);
    Mat2D X = outcome_design(data, arms, covs, false);
    Vec1D y = outcome_vector(data, outcome);
    FitResult fit = fit_logistic(X, y, effective_weights(data, opts));

    std::vector<EffectEstimate> out;
    for (int k = 1; k < arms.n_arms; ++k) {
        EffectEstimate e;
        e.measure = EffectMeasure::OddsRatio;
        e.scope = EstimandScope::Conditional;
        e.arm = arms.labels[static_cast<std::size_t>(k)];
        e.method = "conditional";
        e.n_used = data.n_rows();
        e.log_point = fit.coef(k);
        e.se_log = std::sqrt(std::max(fit.cov(k, k), 0.0));
        e.point = std::exp(e.log_point);
        e.ci_low = std::exp(e.log_point - kZ95 * e.se_log);
        e.ci_high = std::exp(e.log_point + kZ95 * e.se_log);
        e.warnings.push_back("conditional OR is noncollapsible; it need not equal the marginal OR");
        if (!fit.converged) e.warnings.push_back("possible separation: fit did not converge");
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<EffectEstimate> ipw_marginal(const MultiCohortDataset& data, const std::string& exposure,
                                         const std::string& outcome,
                                         const std::vector<std::string>& propensity_covariates,
                                         bool stabilized, const EstimatorOptions& opts)
{
    std::vector<std::string> cols = propensity_covariates;
    cols.push_back(exposure);
    cols.push_back(outcome);
    require_complete(data, cols);

    ArmInfo arms = arm_info(data, exposure);
    std::vector<std::string> prop_covs = propensity_covariates;

    // point-estimate propensity model kept for bootstrap warm starts
    PropensityModel warm_holder;
    bool have_warm = false;

    auto risks_of = [&, prop_covs](const MultiCohortDataset& d, const Vec1D& base, bool is_boot) -> RiskSet {
        ArmInfo a = arm_info(d, exposure);
        Vec1D y = outcome_vector(d, outcome);
        Mat2D covs = covariate_block(d, prop_covs, opts.include_cohort_indicator);
        Mat2D W(d.n_rows(), covs.cols() + 1);
        W.col(0).setOnes();
        W.rightCols(covs.cols()) = covs;

        PropensityModel model = fit_propensity(W, a, base, is_boot && have_warm ? &warm_holder : nullptr);
        if (!is_boot) {
            warm_holder = model;
            have_warm = true;
        }
        RiskSet rs;
        rs.ok = model.converged;
        Mat2D P = propensity_matrix(model, W, a);

        // received-arm propensity, trimmed at the 1st/99th percentile
        std::vector<double> received(static_cast<std::size_t>(d.n_rows()));
        for (Eigen::Index r = 0; r < d.n_rows(); ++r)
            received[static_cast<std::size_t>(r)] = P(r, a.value[static_cast<std::size_t>(r)]);
        double lo = quantile(received, 0.01), hi = quantile(received, 0.99);
        std::vector<Eigen::Index> violations;
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
            double& p = received[static_cast<std::size_t>(r)];
            double trimmed = std::clamp(p, lo, hi);
            if (trimmed != p) ++rs.capped;
            p = trimmed;
            if (p <= 0.01 || p >= 0.99) violations.push_back(r);
        }
        if (!violations.empty() && !is_boot)
            throw DomainError("ipw_marginal: positivity violation in strata: " +
                              describe_strata(d, prop_covs, violations));

        std::vector<double> marg(static_cast<std::size_t>(a.n_arms), 0.0);
        double wtot = 0;
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
            double bw = base.size() ? base(r) : 1.0;
            marg[static_cast<std::size_t>(a.value[static_cast<std::size_t>(r)])] += bw;
            wtot += bw;
        }
        rs.risk.assign(static_cast<std::size_t>(a.n_arms), 0.0);
        std::vector<double> denom(static_cast<std::size_t>(a.n_arms), 0.0);
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
            std::size_t k = static_cast<std::size_t>(a.value[static_cast<std::size_t>(r)]);
            double bw = base.size() ? base(r) : 1.0;
            double w = bw / received[static_cast<std::size_t>(r)];
            if (stabilized) w *= marg[k] / wtot;
            rs.risk[k] += w * y(r);
            denom[k] += w;
        }
        for (std::size_t k = 0; k < rs.risk.size(); ++k) {
            if (denom[k] <= 0) {
                rs.ok = false;
                rs.risk[k] = std::numeric_limits<double>::quiet_NaN();
            } else {
                rs.risk[k] /= denom[k];
            }
        }
        return rs;
    };

    return marginal_report(data, "ipw", arms, opts, risks_of);
}

std::vector<EffectEstimate> g_computation(const MultiCohortDataset& data, const std::string& exposure,
                                          const std::string& outcome,
                                          const std::vector<std::string>& covariates,
                                          const EstimatorOptions& opts)
{
    std::vector<std::string> cols = covariates;
    cols.push_back(exposure);
    cols.push_back(outcome);
    require_complete(data, cols);

    ArmInfo arms = arm_info(data, exposure);
    Vec1D warm;
    bool have_warm = false;

    auto risks_of = [&, covariates](const MultiCohortDataset& d, const Vec1D& base, bool is_boot) -> RiskSet {
        ArmInfo a = arm_info(d, exposure);
        Vec1D y = outcome_vector(d, outcome);
        Mat2D covs = covariate_block(d, covariates, opts.include_cohort_indicator);
        Mat2D X = outcome_design(d, a, covs, opts.interactions);
        FitResult fit = fit_logistic(X, y, base, is_boot && have_warm ? warm : Vec1D());
        if (!is_boot) {
            warm = fit.coef;
            have_warm = true;
        }
        RiskSet rs;
        rs.ok = fit.converged;
        rs.risk.assign(static_cast<std::size_t>(a.n_arms), 0.0);
        double wtot = 0;
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) wtot += base.size() ? base(r) : 1.0;
        for (int k = 0; k < a.n_arms; ++k) {
            Mat2D Xk = outcome_design(d, a, covs, opts.interactions, k);
            Vec1D eta = Xk * fit.coef;
            double mean = 0;
            for (Eigen::Index r = 0; r < d.n_rows(); ++r)
                mean += (base.size() ? base(r) : 1.0) * expit(eta(r));
            rs.risk[static_cast<std::size_t>(k)] = mean / wtot;
        }
        return rs;
    };

    return marginal_report(data, "gcomp", arms, opts, risks_of);
}

std::vector<EffectEstimate> aipw(const MultiCohortDataset& data, const std::string& exposure,
                                 const std::string& outcome, const std::vector<std::string>& covariates,
                                 const EstimatorOptions& opts)
{
    std::vector<std::string> cols = covariates;
    if (opts.aipw_outcome_covariates)
        cols.insert(cols.end(), opts.aipw_outcome_covariates->begin(), opts.aipw_outcome_covariates->end());
    if (opts.aipw_propensity_covariates)
        cols.insert(cols.end(), opts.aipw_propensity_covariates->begin(),
                    opts.aipw_propensity_covariates->end());
    cols.push_back(exposure);
    cols.push_back(outcome);
    require_complete(data, cols);

    ArmInfo arms = arm_info(data, exposure);
    if (arms.n_arms != 2) throw DomainError("aipw supports binary exposures only");

    const std::vector<std::string> outcome_covs =
        opts.aipw_outcome_covariates ? *opts.aipw_outcome_covariates : covariates;
    const std::vector<std::string> propensity_covs =
        opts.aipw_propensity_covariates ? *opts.aipw_propensity_covariates : covariates;

    Vec1D warm_outcome;
    PropensityModel warm_prop;
    bool have_warm = false;

    auto risks_of = [&, outcome_covs, propensity_covs](const MultiCohortDataset& d, const Vec1D& base,
                                                       bool is_boot) -> RiskSet {
        ArmInfo a = arm_info(d, exposure);
        Vec1D y = outcome_vector(d, outcome);
        Mat2D ocovs = covariate_block(d, outcome_covs, opts.include_cohort_indicator);
        Mat2D pcovs = covariate_block(d, propensity_covs, opts.include_cohort_indicator);

        Mat2D Xo = outcome_design(d, a, ocovs, false);
        FitResult ofit = fit_logistic(Xo, y, base, is_boot && have_warm ? warm_outcome : Vec1D());

        Mat2D W(d.n_rows(), pcovs.cols() + 1);
        W.col(0).setOnes();
        W.rightCols(pcovs.cols()) = pcovs;
        PropensityModel pmodel = fit_propensity(W, a, base, is_boot && have_warm ? &warm_prop : nullptr);
        if (!is_boot) {
            warm_outcome = ofit.coef;
            warm_prop = pmodel;
            have_warm = true;
        }

        RiskSet rs;
        rs.ok = ofit.converged && pmodel.converged;
        Mat2D P = propensity_matrix(pmodel, W, a);

        // trim the treated propensity at its 1st/99th percentile
        std::vector<double> treated(static_cast<std::size_t>(d.n_rows()));
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) treated[static_cast<std::size_t>(r)] = P(r, 1);
        double lo = quantile(treated, 0.01), hi = quantile(treated, 0.99);
        std::vector<Eigen::Index> violations;
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
            double trimmed = std::clamp(P(r, 1), lo, hi);
            if (trimmed != P(r, 1)) ++rs.capped;
            P(r, 1) = trimmed;
            P(r, 0) = 1 - trimmed;
            double rec = P(r, a.value[static_cast<std::size_t>(r)]);
            if (rec <= 0.01 || rec >= 0.99) violations.push_back(r);
        }
        if (!violations.empty() && !is_boot)
            throw DomainError("aipw: positivity violation in strata: " +
                              describe_strata(d, propensity_covs, violations));

        rs.risk.assign(2, 0.0);
        double wtot = 0;
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) wtot += base.size() ? base(r) : 1.0;
        for (int arm_v = 0; arm_v < 2; ++arm_v) {
            Mat2D Xk = outcome_design(d, a, ocovs, false, arm_v);
            Vec1D eta = Xk * ofit.coef;
            double acc = 0;
            for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
                double m_hat = expit(eta(r));
                double indicator = a.value[static_cast<std::size_t>(r)] == arm_v ? 1.0 : 0.0;
                double aug = indicator * (y(r) - m_hat) / P(r, arm_v) + m_hat;
                acc += (base.size() ? base(r) : 1.0) * aug;
            }
            rs.risk[static_cast<std::size_t>(arm_v)] = acc / wtot;
        }
        return rs;
    };

    return marginal_report(data, "aipw", arms, opts, risks_of);
}

std::string to_string(AdjustMethod m)
{
    switch (m) {
        case AdjustMethod::Conditional: return "conditional";
        case AdjustMethod::IPW: return "ipw";
        case AdjustMethod::GComp: return "gcomp";
        case AdjustMethod::AIPW: return "aipw";
    }
    return "conditional";
}

AdjustMethod adjust_method_from_string(const std::string& s)
{
    if (s == "conditional" || s == "Conditional") return AdjustMethod::Conditional;
    if (s == "ipw" || s == "IPW") return AdjustMethod::IPW;
    if (s == "gcomp" || s == "GComp" || s == "g-computation") return AdjustMethod::GComp;
    if (s == "aipw" || s == "AIPW") return AdjustMethod::AIPW;
    throw DomainError("unknown adjustment method '" + s + "'");
}

std::vector<EffectEstimate> pooled_analysis(const MultiCohortDataset& pooled,
                                            bool include_cohort_indicator, AdjustMethod method,
                                            const std::string& exposure, const std::string& outcome,
                                            const std::vector<std::string>& covariates,
                                            const EstimatorOptions& opts)
{
    EstimatorOptions local = opts;
    local.include_cohort_indicator = include_cohort_indicator && pooled.cohort_ids.size() > 1;
    std::vector<EffectEstimate> out;
    switch (method) {
        case AdjustMethod::Conditional:
            out = conditional_or(pooled, exposure, outcome, covariates, local);
            break;
        case AdjustMethod::IPW:
            out = ipw_marginal(pooled, exposure, outcome, covariates, local.stabilized, local);
            break;
        case AdjustMethod::GComp:
            out = g_computation(pooled, exposure, outcome, covariates, local);
            break;
        case AdjustMethod::AIPW:
            out = aipw(pooled, exposure, outcome, covariates, local);
            break;
    }
    for (EffectEstimate& e : out) e.cohort = "pooled";
    return out;
}

std::vector<CohortResult> replication_analysis(const MultiCohortDataset& pooled, AdjustMethod method,
                                               const std::string& exposure, const std::string& outcome,
                                               const std::vector<std::string>& covariates,
                                               const EstimatorOptions& opts)
{
    if (pooled.cohort_ids.empty()) throw DomainError("replication_analysis requires >= 1 cohort");
    int exp_col = pooled.require_col(exposure);
    std::vector<CohortResult> out;
    for (std::size_t ci = 0; ci < pooled.cohort_ids.size(); ++ci) {
        CohortResult res;
        res.cohort_id = pooled.cohort_ids[ci];
        MultiCohortDataset sub = pooled.filter_rows(pooled.rows_of_cohort(static_cast<int>(ci)));
        Eigen::Index exposed = 0, unexposed = 0;
        for (Eigen::Index r = 0; r < sub.n_rows(); ++r) {
            if (sub.values(r, exp_col) == kMissing) continue;
            (sub.values(r, exp_col) == 0 ? unexposed : exposed) += 1;
        }
        if (exposed < 10 || unexposed < 10) {
            res.sufficient = false;
            out.push_back(std::move(res));
            continue;
        }
        EstimatorOptions local = opts;
        local.include_cohort_indicator = false;
        local.seed = opts.seed ^ (0x9E3779B97F4A7C15ULL * (ci + 1));
        if (opts.base_weights.size()) {
            std::vector<Eigen::Index> rows = pooled.rows_of_cohort(static_cast<int>(ci));
            local.base_weights.resize(static_cast<Eigen::Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i)
                local.base_weights(static_cast<Eigen::Index>(i)) = opts.base_weights(rows[i]);
        }
        res.estimates = pooled_analysis(sub, false, method, exposure, outcome, covariates, local);
        for (EffectEstimate& e : res.estimates) e.cohort = res.cohort_id;
        out.push_back(std::move(res));
    }
    return out;
}

MetaResult meta_fixed_random(const std::vector<MetaInput>& inputs)
{
    if (inputs.size() < 2) throw DomainError("meta_fixed_random requires at least two inputs");
    for (const MetaInput& in : inputs)
        if (!(in.se > 0)) throw DomainError("meta_fixed_random: standard errors must be positive");

    MetaResult m;
    double sw = 0, swt = 0, sw2 = 0;
    for (const MetaInput& in : inputs) {
        double w = 1.0 / (in.se * in.se);
        m.fixed_weights.push_back(w);
        sw += w;
        sw2 += w * w;
        swt += w * in.log_effect;
    }
    m.fixed = swt / sw;
    m.fixed_se = std::sqrt(1.0 / sw);
    for (std::size_t i = 0; i < inputs.size(); ++i)
        m.q += m.fixed_weights[i] * (inputs[i].log_effect - m.fixed) * (inputs[i].log_effect - m.fixed);
    double df = static_cast<double>(inputs.size()) - 1.0;
    m.tau2 = std::max(0.0, (m.q - df) / (sw - sw2 / sw));
    m.i2 = m.q > 0 ? std::max(0.0, (m.q - df) / m.q) * 100.0 : 0.0;

    double swr = 0, swrt = 0;
    for (const MetaInput& in : inputs) {
        double w = 1.0 / (in.se * in.se + m.tau2);
        m.random_weights.push_back(w);
        swr += w;
        swrt += w * in.log_effect;
    }
    m.random = swrt / swr;
    m.random_se = std::sqrt(1.0 / swr);
    return m;
}

std::vector<InteractionResult> heterogeneity_interaction(const MultiCohortDataset& pooled,
                                                         const std::string& exposure,
                                                         const std::string& outcome,
                                                         const std::vector<std::string>& covariates,
                                                         const EstimatorOptions& opts)
{
    if (pooled.cohort_ids.size() != 2)
        throw DomainError("heterogeneity_interaction requires exactly two cohorts");
    std::vector<std::string> cols = covariates;
    cols.push_back(exposure);
    cols.push_back(outcome);
    require_complete(pooled, cols);

    ArmInfo arms = arm_info(pooled, exposure);
    Mat2D covs = covariate_block(pooled, covariates, false);
    const Eigen::Index n = pooled.n_rows();
    const int arm_terms = arms.n_arms - 1;

    // intercept | arm dummies | cohort | arm x cohort | covariates
    Mat2D X(n, 1 + arm_terms + 1 + arm_terms + covs.cols());
    X.col(0).setOnes();
    for (int k = 1; k < arms.n_arms; ++k)
        for (Eigen::Index r = 0; r < n; ++r)
            X(r, k) = arms.value[static_cast<std::size_t>(r)] == k ? 1.0 : 0.0;
    for (Eigen::Index r = 0; r < n; ++r) X(r, 1 + arm_terms) = pooled.cohort(r) == 1 ? 1.0 : 0.0;
    for (int k = 1; k < arms.n_arms; ++k)
        X.col(1 + arm_terms + k) = X.col(k).cwiseProduct(X.col(1 + arm_terms));
    if (covs.cols() > 0) X.rightCols(covs.cols()) = covs;

    Vec1D y = outcome_vector(pooled, outcome);
    FitResult fit = fit_logistic(X, y, effective_weights(pooled, opts));

    std::vector<InteractionResult> out;
    for (int k = 1; k < arms.n_arms; ++k) {
        InteractionResult res;
        res.arm = arms.labels[static_cast<std::size_t>(k)];
        Eigen::Index idx = 1 + arm_terms + k;
        res.log_or = fit.coef(idx);
        res.se = std::sqrt(std::max(fit.cov(idx, idx), 0.0));
        double z = res.se > 0 ? res.log_or / res.se : 0.0;
        res.wald_p = 2.0 * (1.0 - norm_cdf(std::abs(z)));
        out.push_back(res);
    }
    return out;
}

RubinResult rubin_pool(const std::vector<RubinInput>& inputs, double nu_complete)
{
    if (inputs.size() < 2) throw DomainError("rubin_pool requires m >= 2 imputations");
    const double m = static_cast<double>(inputs.size());
    RubinResult res;
    // deviations from the first input keep B exactly zero for identical draws
    const double anchor = inputs.front().theta;
    double shift = 0.0;
    for (const RubinInput& in : inputs) {
        shift += in.theta - anchor;
        res.within += in.variance;
    }
    res.pooled = anchor + shift / m;
    res.within /= m;
    for (const RubinInput& in : inputs)
        res.between += (in.theta - res.pooled) * (in.theta - res.pooled);
    res.between /= (m - 1.0);
    res.total = res.within + (1.0 + 1.0 / m) * res.between;

    // Barnard-Rubin small-sample degrees of freedom
    if (res.between <= 0.0) {
        res.df = std::numeric_limits<double>::infinity();
    } else {
        double lambda = (1.0 + 1.0 / m) * res.between / res.total;
        double nu_old = (m - 1.0) / (lambda * lambda);
        if (std::isinf(nu_complete)) {
            res.df = nu_old;
        } else {
            double nu_obs = nu_complete * (nu_complete + 1.0) / (nu_complete + 3.0) * (1.0 - lambda);
            res.df = 1.0 / (1.0 / nu_old + 1.0 / nu_obs);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// emission

namespace {

json estimate_to_json(const EffectEstimate& e)
{
    json j;
    j["method"] = e.method;
    j["estimand"] = to_string(e.measure);
    j["scope"] = to_string(e.scope);
    j["cohort"] = e.cohort;
    j["arm"] = e.arm;
    j["point"] = e.point;
    j["ci_low"] = e.ci_low;
    j["ci_high"] = e.ci_high;
    j["se_log"] = e.se_log;
    j["n_used"] = static_cast<long long>(e.n_used);
    j["warnings"] = json(e.warnings);
    return j;
}

std::string csv_number(double v)
{
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

} // namespace

std::string estimates_to_json(const std::vector<EffectEstimate>& estimates)
{
    json doc = json::array();
    for (const EffectEstimate& e : estimates) doc.push_back(estimate_to_json(e));
    return doc.dump(2) + "\n";
}

std::string estimates_to_csv(const std::vector<EffectEstimate>& estimates)
{
    std::ostringstream os;
    os << "method,estimand,scope,cohort,arm,point,ci_low,ci_high,se_log,n_used,warnings\n";
    for (const EffectEstimate& e : estimates) {
        std::string warn;
        for (const std::string& w : e.warnings) warn += (warn.empty() ? "" : "; ") + w;
        os << e.method << "," << to_string(e.measure) << "," << to_string(e.scope) << "," << e.cohort
           << "," << e.arm << "," << csv_number(e.point) << "," << csv_number(e.ci_low) << ","
           << csv_number(e.ci_high) << "," << csv_number(e.se_log) << "," << e.n_used << ",\""
           << warn << "\"\n";
    }
    return os.str();
}

} // namespace cohortforge
