#include "cohortforge/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>

namespace cohortforge {

int MultiCohortDataset::col_index(const std::string& name) const
{
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

int MultiCohortDataset::require_col(const std::string& name) const
{
    int idx = col_index(name);
    if (idx < 0) throw DomainError("dataset has no column '" + name + "'");
    return idx;
}

MultiCohortDataset MultiCohortDataset::filter_rows(const std::vector<Eigen::Index>& rows) const
{
    MultiCohortDataset out;
    out.columns = columns;
    out.cohort_ids = cohort_ids;
    out.values.resize(static_cast<Eigen::Index>(rows.size()), values.cols());
    out.cohort.resize(static_cast<Eigen::Index>(rows.size()));
    out.selected.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.values.row(static_cast<Eigen::Index>(i)) = values.row(rows[i]);
        out.cohort(static_cast<Eigen::Index>(i)) = cohort(rows[i]);
        out.selected(static_cast<Eigen::Index>(i)) = selected(rows[i]);
    }
    return out;
}

std::vector<Eigen::Index> MultiCohortDataset::rows_of_cohort(int cohort_index) const
{
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n_rows(); ++i)
        if (cohort(i) == cohort_index) rows.push_back(i);
    return rows;
}

bool MultiCohortDataset::equals(const MultiCohortDataset& other) const
{
    if (cohort_ids != other.cohort_ids || columns.size() != other.columns.size()) return false;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name != other.columns[i].name || columns[i].levels != other.columns[i].levels)
            return false;
    if (n_rows() != other.n_rows()) return false;
    return (values == other.values).all() && (cohort == other.cohort).all() &&
           (selected == other.selected).all();
}

MultiCohortDataset restrict_to_selected(const MultiCohortDataset& data)
{
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < data.n_rows(); ++i)
        if (data.selected(i)) rows.push_back(i);
    return data.filter_rows(rows);
}

MultiCohortDataset complete_case(const MultiCohortDataset& data,
                                 const std::vector<std::string>& analysis_columns)
{
    std::vector<int> cols;
    if (analysis_columns.empty()) {
        for (std::size_t i = 0; i < data.columns.size(); ++i) cols.push_back(static_cast<int>(i));
    } else {
        for (const std::string& name : analysis_columns) cols.push_back(data.require_col(name));
    }
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < data.n_rows(); ++i) {
        bool complete = true;
        for (int c : cols)
            if (data.values(i, c) == kMissing) complete = false;
        if (complete) rows.push_back(i);
    }
    return data.filter_rows(rows);
}

namespace {

// remap one dataset's column in place per the merge map
void apply_coarsen(MultiCohortDataset& data, const Coarsen& c)
{
    int idx = data.col_index(c.variable);
    if (idx < 0) return;
    Column& col = data.columns[idx];
    if (col.levels.empty())
        throw DomainError("coarsening '" + c.variable + "' requires named levels");

    std::vector<std::string> new_levels;
    for (const auto& [from, to] : c.merge)
        if (std::find(new_levels.begin(), new_levels.end(), to) == new_levels.end())
            new_levels.push_back(to);

    std::vector<int> remap(col.levels.size(), kMissing);
    for (std::size_t i = 0; i < col.levels.size(); ++i) {
        for (const auto& [from, to] : c.merge) {
            if (from == col.levels[i]) {
                auto it = std::find(new_levels.begin(), new_levels.end(), to);
                remap[i] = static_cast<int>(it - new_levels.begin());
            }
        }
        if (remap[i] == kMissing)
            throw DomainError("coarsening '" + c.variable + "': category '" + col.levels[i] +
                              "' has no merge mapping");
    }
    for (Eigen::Index r = 0; r < data.n_rows(); ++r) {
        int v = data.values(r, idx);
        if (v != kMissing) data.values(r, idx) = remap[static_cast<std::size_t>(v)];
    }
    col.levels = new_levels;
}

} // namespace

MultiCohortDataset pool(const std::vector<MultiCohortDataset>& per_cohort,
                        const std::vector<Coarsen>& harmonization)
{
    if (per_cohort.empty()) throw DomainError("pool requires at least one dataset");

    std::vector<MultiCohortDataset> prepared = per_cohort;
    for (MultiCohortDataset& d : prepared)
        for (const Coarsen& c : harmonization) apply_coarsen(d, c);

    const MultiCohortDataset& first = prepared.front();
    for (const MultiCohortDataset& d : prepared) {
        if (d.columns.size() != first.columns.size())
            throw DomainError("pool: irreconcilable columns (different column counts)");
        for (std::size_t i = 0; i < d.columns.size(); ++i) {
            if (d.columns[i].name != first.columns[i].name)
                throw DomainError("pool: irreconcilable columns ('" + d.columns[i].name + "' vs '" +
                                  first.columns[i].name + "')");
            if (d.columns[i].levels != first.columns[i].levels)
                throw DomainError("pool: column '" + d.columns[i].name +
                                  "' has irreconcilable codings and no merge map covers them");
        }
    }

    MultiCohortDataset out;
    out.columns = first.columns;
    Eigen::Index total = 0;
    for (const MultiCohortDataset& d : prepared) total += d.n_rows();
    out.values.resize(total, static_cast<Eigen::Index>(out.columns.size()));
    out.cohort.resize(total);
    out.selected.resize(total);

    Eigen::Index at = 0;
    for (const MultiCohortDataset& d : prepared) {
        std::vector<int> cohort_remap;
        for (const std::string& id : d.cohort_ids) {
            auto it = std::find(out.cohort_ids.begin(), out.cohort_ids.end(), id);
            if (it == out.cohort_ids.end()) {
                out.cohort_ids.push_back(id);
                cohort_remap.push_back(static_cast<int>(out.cohort_ids.size()) - 1);
            } else {
                cohort_remap.push_back(static_cast<int>(it - out.cohort_ids.begin()));
            }
        }
        for (Eigen::Index r = 0; r < d.n_rows(); ++r, ++at) {
            out.values.row(at) = d.values.row(r);
            out.cohort(at) = cohort_remap[static_cast<std::size_t>(d.cohort(r))];
            out.selected(at) = d.selected(r);
        }
    }
    return out;
}

std::string to_csv(const MultiCohortDataset& data)
{
    std::ostringstream os;
    os << "cohort,selected";
    for (const Column& c : data.columns) os << "," << c.name;
    os << "\n";
    for (Eigen::Index r = 0; r < data.n_rows(); ++r) {
        os << data.cohort_ids[static_cast<std::size_t>(data.cohort(r))] << ","
           << (data.selected(r) ? 1 : 0);
        for (Eigen::Index c = 0; c < data.values.cols(); ++c) {
            os << ",";
            if (data.values(r, c) != kMissing) os << data.values(r, c);
        }
        os << "\n";
    }
    return os.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    out.push_back(field);
    return out;
}

} // namespace

MultiCohortDataset from_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DomainError("csv: empty input");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "cohort" || header[1] != "selected")
        throw DomainError("csv: header must start with 'cohort,selected'");

    MultiCohortDataset out;
    for (std::size_t i = 2; i < header.size(); ++i) out.columns.push_back({header[i], {}});

    std::vector<std::array<int, 2>> meta; // cohort idx, selected
    std::vector<std::vector<int>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw DomainError("csv: line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        auto it = std::find(out.cohort_ids.begin(), out.cohort_ids.end(), fields[0]);
        int cidx;
        if (it == out.cohort_ids.end()) {
            out.cohort_ids.push_back(fields[0]);
            cidx = static_cast<int>(out.cohort_ids.size()) - 1;
        } else {
            cidx = static_cast<int>(it - out.cohort_ids.begin());
        }
        std::vector<int> row;
        for (std::size_t i = 2; i < fields.size(); ++i)
            row.push_back(fields[i].empty() ? kMissing : std::stoi(fields[i]));
        meta.push_back({cidx, fields[1] == "1" ? 1 : 0});
        rows.push_back(std::move(row));
    }

    out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.columns.size()));
    out.cohort.resize(static_cast<Eigen::Index>(rows.size()));
    out.selected.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        out.cohort(static_cast<Eigen::Index>(r)) = meta[r][0];
        out.selected(static_cast<Eigen::Index>(r)) = meta[r][1] == 1;
    }

    // recover level counts from the data so downstream dummy coding works
    for (std::size_t c = 0; c < out.columns.size(); ++c) {
        int max_v = 1;
        for (Eigen::Index r = 0; r < out.n_rows(); ++r)
            max_v = std::max(max_v, out.values(r, static_cast<Eigen::Index>(c)));
        if (max_v > 1) {
            for (int v = 0; v <= max_v; ++v) out.columns[c].levels.push_back(std::to_string(v));
        }
    }
    return out;
}

void save_csv(const MultiCohortDataset& data, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DomainError("cannot write '" + path + "'");
    out << to_csv(data);
}

MultiCohortDataset load_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open dataset file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_csv(buf.str());
}

} // namespace cohortforge
