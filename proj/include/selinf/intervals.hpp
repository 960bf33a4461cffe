#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace selinf {

enum class CiMethod { plr, debias, resid_boot, paired_boot, stub };

const char* to_string(CiMethod method) noexcept;
// Accepts the CLI spellings (plr, debias, resid-boot, paired-boot).
CiMethod parse_ci_method(const std::string& text);

struct IntervalRow
{
    std::string term;
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    double width() const { return upper - lower; }
    bool covers(double value) const { return lower <= value && value <= upper; }
};

struct IntervalTable
{
    CiMethod method = CiMethod::stub;
    double level = 0.95;
    std::vector<IntervalRow> rows;

    // Columns: term,estimate,lower,upper,width,method,level,display.
    // Numbers are written with 17 significant digits; `display` holds the
    // interval rounded to three decimals.
    void write_csv(std::ostream& out) const;
};

// "(Intercept)" (when requested) followed by x1..xp.
std::vector<std::string> default_term_names(std::size_t p, bool intercept);

} // namespace selinf
