#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "selinf/solver.hpp"

namespace selinf {

struct CategoricalEncoding
{
    std::string variable;
    std::string reference;
    std::vector<std::string> levels;  // non-reference levels, one column each
    std::vector<Index> columns;       // positions in Dataset::X
};

struct ImputationRecord
{
    std::string column;
    int imputed = 0;
    std::string value; // median or mode used
};

struct Dataset
{
    std::vector<std::string> feature_names;
    Matrix X;
    Vector y;
    std::string target;
    std::vector<CategoricalEncoding> encoding_map;
    std::vector<ImputationRecord> imputation_log;
    std::vector<std::string> warnings;
};

struct CsvOptions
{
    std::string target;
    std::vector<std::string> drop_columns;
    std::vector<std::string> categorical_columns;
    // Reference level per categorical variable; otherwise the first level
    // observed in file order.
    std::map<std::string, std::string> reference_levels;
    char delimiter = ',';
};

// Cells treated as missing: empty, NA, NaN, ?, NULL (case-sensitive).
bool is_missing_cell(const std::string& cell);

// Numeric columns come first in header order, then the indicator blocks of
// the categorical columns in header order, levels in order of first
// appearance. Numeric cells may carry a leading '$' and ',' digit grouping.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);
Dataset load_csv(std::istream& in, const CsvOptions& options);

// R-style syntactic name: characters outside [A-Za-z0-9._] become '.'.
std::string sanitize_name(const std::string& text);

// Target, exclusions, categorical columns and reference levels for the
// auto-claim insurance data (CLM_AMT5 modeled with a Tweedie family).
CsvOptions autoclaim_options();

// Synthetic file with the auto-claim schema. Claim amounts are compound
// Poisson-gamma with positive MVR_PTS, REVOLKED and urban effects.
void write_autoclaim_standin(std::ostream& out, int rows = 200, std::uint64_t seed = 1);

} // namespace selinf
