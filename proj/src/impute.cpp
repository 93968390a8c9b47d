#include "cohortforge/impute.hpp"

#include <algorithm>
#include <cmath>

#include "cohortforge/estimators.hpp"

namespace cohortforge {

namespace {

struct ChainPlan {
    std::vector<int> impute_cols;              // ascending missingness, ties by column order
    std::vector<std::vector<Eigen::Index>> missing_rows; // per impute col
    std::vector<int> predictor_cols;           // analysis columns (superset of impute cols)
};

ChainPlan plan_chain(const MultiCohortDataset& data, const std::vector<Eigen::Index>& rows,
                     const std::vector<int>& analysis_cols, const std::string& scope_label)
{
    ChainPlan plan;
    plan.predictor_cols = analysis_cols;
    std::vector<std::pair<double, int>> frac;
    for (int c : analysis_cols) {
        Eigen::Index miss = 0;
        for (Eigen::Index r : rows) miss += data.values(r, c) == kMissing;
        if (miss == static_cast<Eigen::Index>(rows.size()))
            throw DomainError("multiple_impute: column '" + data.columns[static_cast<std::size_t>(c)].name +
                              "' is fully missing " + scope_label);
        if (miss > 0) frac.push_back({static_cast<double>(miss) / static_cast<double>(rows.size()), c});
    }
    std::stable_sort(frac.begin(), frac.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [f, c] : frac) {
        (void)f;
        plan.impute_cols.push_back(c);
        std::vector<Eigen::Index> miss_rows;
        for (Eigen::Index r : rows)
            if (data.values(r, c) == kMissing) miss_rows.push_back(r);
        plan.missing_rows.push_back(std::move(miss_rows));
    }
    return plan;
}

// design for one imputation model: intercept + dummies of every other
// analysis column (+ cohort dummies when pooled scope)
Mat2D imputation_design(const MultiCohortDataset& work, const std::vector<Eigen::Index>& rows,
                        const std::vector<int>& predictor_cols, int target_col, bool cohort_dummies)
{
    Eigen::Index p = 1;
    for (int c : predictor_cols)
        if (c != target_col) p += work.columns[static_cast<std::size_t>(c)].n_levels() - 1;
    int n_cohorts = static_cast<int>(work.cohort_ids.size());
    if (cohort_dummies) p += n_cohorts - 1;

    Mat2D X(static_cast<Eigen::Index>(rows.size()), p);
    X.col(0).setOnes();
    Eigen::Index at = 1;
    for (int c : predictor_cols) {
        if (c == target_col) continue;
        int levels = work.columns[static_cast<std::size_t>(c)].n_levels();
        for (int lv = 1; lv < levels; ++lv) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                X(static_cast<Eigen::Index>(i), at) = work.values(rows[i], c) == lv ? 1.0 : 0.0;
            ++at;
        }
    }
    if (cohort_dummies) {
        for (int lv = 1; lv < n_cohorts; ++lv) {
            for (std::size_t i = 0; i < rows.size(); ++i)
                X(static_cast<Eigen::Index>(i), at) = work.cohort(rows[i]) == lv ? 1.0 : 0.0;
            ++at;
        }
    }
    return X;
}

// Drop predictors that are collinear within the fit rows (a cohort dummy is
// constant when one cohort holds all of a variable's missingness, the cohort
// indicator duplicates a cohort-constant column, and so on). The same column
// selection is applied to the prediction design.
void prune_collinear(Mat2D& Xfit, Mat2D& Xmiss)
{
    Eigen::ColPivHouseholderQR<Mat2D> qr(Xfit);
    qr.setThreshold(1e-8);
    const Eigen::Index rank = qr.rank();
    if (rank == Xfit.cols()) return;
    auto perm = qr.colsPermutation().indices();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < rank; ++i) keep.push_back(perm(i));
    std::sort(keep.begin(), keep.end());
    Mat2D fit_reduced(Xfit.rows(), rank), miss_reduced(Xmiss.rows(), rank);
    for (Eigen::Index i = 0; i < rank; ++i) {
        fit_reduced.col(i) = Xfit.col(keep[static_cast<std::size_t>(i)]);
        miss_reduced.col(i) = Xmiss.col(keep[static_cast<std::size_t>(i)]);
    }
    Xfit = std::move(fit_reduced);
    Xmiss = std::move(miss_reduced);
}

// one chained-equations pass over the given row block
void run_chain(MultiCohortDataset& work, const MultiCohortDataset& original,
               const std::vector<Eigen::Index>& rows, const ChainPlan& plan, bool cohort_dummies,
               Rng& rng)
{
    // initialize missing cells from the observed empirical marginal
    for (std::size_t k = 0; k < plan.impute_cols.size(); ++k) {
        int c = plan.impute_cols[k];
        std::vector<int> observed;
        for (Eigen::Index r : rows)
            if (original.values(r, c) != kMissing) observed.push_back(original.values(r, c));
        for (Eigen::Index r : plan.missing_rows[k])
            work.values(r, c) = observed[rng.uniform_index(observed.size())];
    }

    const int burn_in = 10;
    for (int cycle = 0; cycle < burn_in; ++cycle) {
        for (std::size_t k = 0; k < plan.impute_cols.size(); ++k) {
            int target = plan.impute_cols[k];
            int levels = work.columns[static_cast<std::size_t>(target)].n_levels();

            std::vector<Eigen::Index> fit_rows;
            for (Eigen::Index r : rows)
                if (original.values(r, target) != kMissing) fit_rows.push_back(r);

            // approximate Bayesian bootstrap: fit on a resample of the
            // observed rows so the fitted parameters carry sampling noise
            std::vector<Eigen::Index> boot_rows(fit_rows.size());
            for (auto& r : boot_rows) r = fit_rows[rng.uniform_index(fit_rows.size())];

            Mat2D Xfit = imputation_design(work, boot_rows, plan.predictor_cols, target, cohort_dummies);
            Mat2D Xmiss =
                imputation_design(work, plan.missing_rows[k], plan.predictor_cols, target, cohort_dummies);
            prune_collinear(Xfit, Xmiss);

            if (levels == 2) {
                Vec1D y(static_cast<Eigen::Index>(boot_rows.size()));
                for (std::size_t i = 0; i < boot_rows.size(); ++i)
                    y(static_cast<Eigen::Index>(i)) = work.values(boot_rows[i], target) == 1 ? 1.0 : 0.0;
                FitResult fit = fit_logistic(Xfit, y);
                Vec1D eta = Xmiss * fit.coef;
                for (std::size_t i = 0; i < plan.missing_rows[k].size(); ++i)
                    work.values(plan.missing_rows[k][i], target) =
                        rng.bernoulli(expit(eta(static_cast<Eigen::Index>(i)))) ? 1 : 0;
            } else {
                // one-vs-rest logits with normalization for small categoricals
                Mat2D probs(Xmiss.rows(), levels);
                for (int lv = 0; lv < levels; ++lv) {
                    Vec1D y(static_cast<Eigen::Index>(boot_rows.size()));
                    for (std::size_t i = 0; i < boot_rows.size(); ++i)
                        y(static_cast<Eigen::Index>(i)) = work.values(boot_rows[i], target) == lv ? 1.0 : 0.0;
                    FitResult fit = fit_logistic(Xfit, y);
                    Vec1D eta = Xmiss * fit.coef;
                    for (Eigen::Index i = 0; i < Xmiss.rows(); ++i) probs(i, lv) = expit(eta(i));
                }
                for (Eigen::Index i = 0; i < Xmiss.rows(); ++i) {
                    double total = probs.row(i).sum();
                    double u = rng.uniform() * total;
                    int pick = 0;
                    double acc = 0;
                    for (int lv = 0; lv < levels; ++lv) {
                        acc += probs(i, lv);
                        if (u < acc) {
                            pick = lv;
                            break;
                        }
                    }
                    work.values(plan.missing_rows[k][static_cast<std::size_t>(i)], target) = pick;
                }
            }
        }
    }
}

} // namespace

std::vector<MultiCohortDataset> multiple_impute(const MultiCohortDataset& data, int m, ImputeScope scope,
                                                std::uint64_t seed,
                                                const std::vector<std::string>& analysis_columns)
{
    if (m < 2) throw DomainError("multiple_impute requires m >= 2");

    std::vector<int> analysis_cols;
    if (analysis_columns.empty()) {
        for (std::size_t i = 0; i < data.columns.size(); ++i)
            analysis_cols.push_back(static_cast<int>(i));
    } else {
        for (const std::string& name : analysis_columns) analysis_cols.push_back(data.require_col(name));
    }

    bool any_missing = false;
    for (int c : analysis_cols)
        for (Eigen::Index r = 0; r < data.n_rows() && !any_missing; ++r)
            any_missing = data.values(r, c) == kMissing;
    if (!any_missing) return std::vector<MultiCohortDataset>(static_cast<std::size_t>(m), data);

    std::vector<MultiCohortDataset> out;
    Rng master = Rng(seed).derive(0x313CE);
    for (int imp = 0; imp < m; ++imp) {
        MultiCohortDataset work = data;
        Rng rng = master.derive(static_cast<std::uint64_t>(imp));
        if (scope == ImputeScope::PerCohort) {
            for (std::size_t ci = 0; ci < data.cohort_ids.size(); ++ci) {
                std::vector<Eigen::Index> rows = data.rows_of_cohort(static_cast<int>(ci));
                if (rows.empty()) continue;
                ChainPlan plan =
                    plan_chain(data, rows, analysis_cols, "in cohort '" + data.cohort_ids[ci] + "'");
                Rng crng = rng.derive(ci);
                run_chain(work, data, rows, plan, false, crng);
            }
        } else {
            std::vector<Eigen::Index> rows(static_cast<std::size_t>(data.n_rows()));
            for (Eigen::Index r = 0; r < data.n_rows(); ++r) rows[static_cast<std::size_t>(r)] = r;
            ChainPlan plan = plan_chain(data, rows, analysis_cols, "in the pooled data");
            bool cohort_dummies = data.cohort_ids.size() > 1;
            run_chain(work, data, rows, plan, cohort_dummies, rng);
        }
        out.push_back(std::move(work));
    }
    return out;
}

} // namespace cohortforge
