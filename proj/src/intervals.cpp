#include "selinf/intervals.hpp"

#include <cstdio>
#include <ostream>

#include "selinf/error.hpp"

namespace selinf {

namespace {

std::string number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

const char* to_string(CiMethod method) noexcept
{
    switch (method) {
    case CiMethod::plr: return "plr";
    case CiMethod::debias: return "debias";
    case CiMethod::resid_boot: return "resid-boot";
    case CiMethod::paired_boot: return "paired-boot";
    case CiMethod::stub: return "stub";
    }
    return "unknown";
}

CiMethod parse_ci_method(const std::string& text)
{
    if (text == "plr")
        return CiMethod::plr;
    if (text == "debias")
        return CiMethod::debias;
    if (text == "resid-boot" || text == "resid_boot")
        return CiMethod::resid_boot;
    if (text == "paired-boot" || text == "paired_boot")
        return CiMethod::paired_boot;
    throw Error(ErrorKind::config, "unknown CI method '" + text + "'");
}

void IntervalTable::write_csv(std::ostream& out) const
{
    out << "term,estimate,lower,upper,width,method,level,display\n";
    for (const auto& r : rows) {
        char display[96];
        std::snprintf(display, sizeof display, "[%.3f, %.3f]", r.lower, r.upper);
        out << r.term << ',' << number(r.estimate) << ',' << number(r.lower) << ',' << number(r.upper) << ','
            << number(r.width()) << ',' << to_string(method) << ',' << number(level) << ",\"" << display << "\"\n";
    }
}

std::vector<std::string> default_term_names(std::size_t p, bool intercept)
{
    std::vector<std::string> names;
    names.reserve(p + 1);
    if (intercept)
        names.emplace_back("(Intercept)");
    for (std::size_t j = 1; j <= p; ++j)
        names.push_back("x" + std::to_string(j));
    return names;
}

} // namespace selinf
