#ifndef COHORTFORGE_DATASET_HPP
#define COHORTFORGE_DATASET_HPP

#include <optional>
#include <string>
#include <vector>

#include "cohortforge/common.hpp"

namespace cohortforge {

// Categorical column. `levels` names the categories (index = stored value);
// an empty list means a plain 0/1 indicator.
struct Column {
    std::string name;
    std::vector<std::string> levels;

    int n_levels() const { return levels.empty() ? 2 : static_cast<int>(levels.size()); }
};

constexpr int kMissing = -1;

// Rectangular multi-cohort records. Values are small non-negative category
// codes with kMissing for absent entries. Every row carries its cohort index
// and a selection flag (true throughout when no selection node is
// configured).
struct MultiCohortDataset {
    std::vector<Column> columns;
    IntArr2D values; // n x columns
    IntArr1D cohort; // index into cohort_ids
    BoolArr1D selected;
    std::vector<std::string> cohort_ids;

    Eigen::Index n_rows() const { return values.rows(); }

    int col_index(const std::string& name) const; // -1 when absent
    int require_col(const std::string& name) const;

    bool missing(Eigen::Index row, int col) const { return values(row, col) == kMissing; }

    MultiCohortDataset filter_rows(const std::vector<Eigen::Index>& rows) const;
    std::vector<Eigen::Index> rows_of_cohort(int cohort_index) const;

    bool equals(const MultiCohortDataset& other) const;
};

// rows with selected == true, order preserved
MultiCohortDataset restrict_to_selected(const MultiCohortDataset& data);

// rows with no missing value in `analysis_columns` (all columns when empty)
MultiCohortDataset complete_case(const MultiCohortDataset& data,
                                 const std::vector<std::string>& analysis_columns = {});

struct Coarsen {
    std::string variable;
    std::vector<std::pair<std::string, std::string>> merge; // old level -> new level
};

// Stack per-cohort datasets; the cohort id of every row is retained (and
// written as the leading "cohort" column of the CSV form). Coarsening maps
// are applied before checking that column codings line up.
MultiCohortDataset pool(const std::vector<MultiCohortDataset>& per_cohort,
                        const std::vector<Coarsen>& harmonization = {});

// CSV: header `cohort,selected,<columns...>`, missing encoded as empty field.
std::string to_csv(const MultiCohortDataset& data);
MultiCohortDataset from_csv(const std::string& text);
void save_csv(const MultiCohortDataset& data, const std::string& path);
MultiCohortDataset load_csv(const std::string& path);

} // namespace cohortforge

#endif
