#include "selinf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <set>

#include "selinf/error.hpp"
#include "selinf/stats.hpp"

namespace selinf {

namespace {

// Splits delimited text into records; quoted fields may hold delimiters,
// doubled quotes and line breaks.
std::vector<std::vector<std::string>> read_records(std::istream& in, char delim)
{
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            record.push_back(std::move(field));
            field.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && in.peek() == '\n')
                in.get(c);
            record.push_back(std::move(field));
            field.clear();
            if (!(record.size() == 1 && record[0].empty()))
                records.push_back(std::move(record));
            record.clear();
            any = false;
        } else {
            field += c;
        }
    }
    if (quoted)
        throw DataError(records.size(), "", "unterminated quoted field");
    if (any) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos)
        return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& cell, double& out)
{
    std::string s;
    s.reserve(cell.size());
    for (std::size_t i = 0; i < cell.size(); ++i) {
        const char c = cell[i];
        if (c == '$' || c == ',')
            continue;
        s += c;
    }
    if (s.empty())
        return false;
    const char* first = s.data();
    if (*first == '+')
        ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool contains(const std::vector<std::string>& v, const std::string& s)
{
    return std::find(v.begin(), v.end(), s) != v.end();
}

double median_of(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string format_value(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

bool is_missing_cell(const std::string& cell)
{
    const std::string t = trim(cell);
    return t.empty() || t == "NA" || t == "NaN" || t == "?" || t == "NULL";
}

std::string sanitize_name(const std::string& text)
{
    std::string out = text;
    for (char& c : out) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '_';
        if (!ok)
            c = '.';
    }
    return out;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path.string());
    return load_csv(in, options);
}

Dataset load_csv(std::istream& in, const CsvOptions& options)
{
    if (options.target.empty())
        throw Error(ErrorKind::config, "no target column given");
    auto records = read_records(in, options.delimiter);
    if (records.empty())
        throw DataError(0, "", "input has no header row");
    std::vector<std::string> header;
    for (const auto& h : records.front())
        header.push_back(trim(h));
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0)
        header[0].erase(0, 3);
    const std::size_t n = records.size() - 1;
    if (n == 0)
        throw DataError(0, "", "input has no data rows");
    for (std::size_t r = 1; r < records.size(); ++r)
        if (records[r].size() != header.size())
            throw DataError(r, "", "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                       " fields, header has " + std::to_string(header.size()));

    Dataset data;
    data.target = options.target;
    const auto target_it = std::find(header.begin(), header.end(), options.target);
    if (target_it == header.end())
        throw Error(ErrorKind::input_validation, "target column '" + options.target + "' not found");
    for (const auto& name : options.drop_columns)
        if (!contains(header, name))
            data.warnings.push_back("drop column '" + name + "' not present");
    for (const auto& name : options.categorical_columns)
        if (!contains(header, name))
            data.warnings.push_back("categorical column '" + name + "' not present");

    const std::size_t target_col = static_cast<std::size_t>(target_it - header.begin());
    data.y.resize(static_cast<Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        const std::string& cell = records[r + 1][target_col];
        double v = 0.0;
        if (is_missing_cell(cell))
            throw DataError(r + 1, options.target, "missing response in row " + std::to_string(r + 1));
        if (!parse_number(trim(cell), v))
            throw DataError(r + 1, options.target,
                            "cannot parse '" + cell + "' in row " + std::to_string(r + 1) + ", column " +
                                options.target);
        data.y(static_cast<Index>(r)) = v;
    }

    std::vector<std::size_t> numeric, categorical;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == target_col || contains(options.drop_columns, header[c]))
            continue;
        (contains(options.categorical_columns, header[c]) ? categorical : numeric).push_back(c);
    }

    std::vector<Vector> columns;
    for (std::size_t c : numeric) {
        Vector col(static_cast<Index>(n));
        std::vector<double> observed;
        std::vector<std::size_t> missing;
        for (std::size_t r = 0; r < n; ++r) {
            const std::string& cell = records[r + 1][c];
            if (is_missing_cell(cell)) {
                missing.push_back(r);
                continue;
            }
            double v = 0.0;
            if (!parse_number(trim(cell), v))
                throw DataError(r + 1, header[c],
                                "cannot parse '" + cell + "' in row " + std::to_string(r + 1) + ", column " +
                                    header[c]);
            col(static_cast<Index>(r)) = v;
            observed.push_back(v);
        }
        if (observed.empty())
            throw DataError(0, header[c], "column " + header[c] + " has no observed values");
        if (!missing.empty()) {
            const double med = median_of(observed);
            for (std::size_t r : missing)
                col(static_cast<Index>(r)) = med;
            data.imputation_log.push_back({header[c], static_cast<int>(missing.size()), format_value(med)});
        }
        data.feature_names.push_back(sanitize_name(header[c]));
        columns.push_back(std::move(col));
    }

    for (std::size_t c : categorical) {
        std::vector<std::string> levels;
        std::map<std::string, int> counts;
        std::vector<std::string> cells(n);
        std::vector<std::size_t> missing;
        for (std::size_t r = 0; r < n; ++r) {
            const std::string cell = trim(records[r + 1][c]);
            if (is_missing_cell(cell)) {
                missing.push_back(r);
                continue;
            }
            if (counts[cell]++ == 0)
                levels.push_back(cell);
            cells[r] = cell;
        }
        if (levels.empty())
            throw DataError(0, header[c], "column " + header[c] + " has no observed values");
        if (!missing.empty()) {
            // most frequent level, ties to the first observed
            std::string mode = levels.front();
            for (const auto& l : levels)
                if (counts[l] > counts[mode])
                    mode = l;
            for (std::size_t r : missing)
                cells[r] = mode;
            data.imputation_log.push_back({header[c], static_cast<int>(missing.size()), mode});
        }
        CategoricalEncoding enc;
        enc.variable = header[c];
        enc.reference = levels.front();
        if (const auto it = options.reference_levels.find(header[c]); it != options.reference_levels.end()) {
            if (!contains(levels, it->second))
                throw Error(ErrorKind::input_validation,
                            "reference level '" + it->second + "' not observed in column " + header[c]);
            enc.reference = it->second;
        }
        for (const auto& level : levels) {
            if (level == enc.reference)
                continue;
            Vector col(static_cast<Index>(n));
            for (std::size_t r = 0; r < n; ++r)
                col(static_cast<Index>(r)) = cells[r] == level ? 1.0 : 0.0;
            enc.levels.push_back(level);
            enc.columns.push_back(static_cast<Index>(columns.size()));
            data.feature_names.push_back(sanitize_name(header[c] + "_" + level));
            columns.push_back(std::move(col));
        }
        if (enc.levels.empty())
            data.warnings.push_back("categorical column '" + header[c] + "' has a single level");
        data.encoding_map.push_back(std::move(enc));
    }

    data.X.resize(static_cast<Index>(n), static_cast<Index>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j)
        data.X.col(static_cast<Index>(j)) = columns[j];
    return data;
}

CsvOptions autoclaim_options()
{
    CsvOptions o;
    o.target = "CLM_AMT5";
    o.drop_columns = {"POLICYNO", "PLCYDATE", "CLM_FREQ5", "CLM_AMT", "RETAINED", "CLM_FLAG"};
    o.categorical_columns = {"CAR_USE", "CAR_TYPE", "RED_CAR", "REVOLKED", "GENDER", "MARRIED",
                             "PARENT1", "JOBCLASS", "MAX_EDUC", "AREA"};
    o.reference_levels = {{"CAR_USE", "Private"},  {"CAR_TYPE", "Panel Truck"}, {"RED_CAR", "no"},
                          {"REVOLKED", "No"},      {"GENDER", "F"},             {"MARRIED", "No"},
                          {"PARENT1", "No"},       {"JOBCLASS", "Unknown"},     {"MAX_EDUC", "<High School"},
                          {"AREA", "Rural"}};
    return o;
}

void write_autoclaim_standin(std::ostream& out, int rows, std::uint64_t seed)
{
    struct Factor
    {
        const char* name;
        std::vector<const char*> levels;
        std::vector<double> weights;
    };
    const std::vector<Factor> factors = {
        {"CAR_USE", {"Private", "Commercial"}, {0.63, 0.37}},
        {"CAR_TYPE", {"Panel Truck", "Pickup", "Sedan", "Sports Car", "SUV", "Van"}, {0.08, 0.17, 0.27, 0.11, 0.28, 0.09}},
        {"RED_CAR", {"no", "yes"}, {0.71, 0.29}},
        {"REVOLKED", {"No", "Yes"}, {0.88, 0.12}},
        {"GENDER", {"F", "M"}, {0.54, 0.46}},
        {"MARRIED", {"No", "Yes"}, {0.40, 0.60}},
        {"PARENT1", {"No", "Yes"}, {0.87, 0.13}},
        {"JOBCLASS",
         {"Unknown", "Blue Collar", "Clerical", "Doctor", "Home Maker", "Lawyer", "Manager", "Professional", "Student"},
         {0.06, 0.22, 0.16, 0.03, 0.08, 0.10, 0.12, 0.14, 0.09}},
        {"MAX_EDUC", {"<High School", "Bachelors", "High School", "Masters", "PhD"}, {0.15, 0.27, 0.29, 0.20, 0.09}},
        {"AREA", {"Rural", "Urban"}, {0.2, 0.8}},
    };

    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto poisson = [&](double m) { return static_cast<int>(std::poisson_distribution<int>(m)(rng)); };

    out << "POLICYNO,PLCYDATE,CLM_FREQ5,CLM_AMT5,CLM_AMT,KIDSDRIV,TRAVTIME,CAR_USE,BLUEBOOK,RETAINED,NPOLICY,"
           "CAR_TYPE,RED_CAR,REVOLKED,MVR_PTS,CLM_FLAG,AGE,HOMEKIDS,YOJ,INCOME,GENDER,MARRIED,PARENT1,JOBCLASS,"
           "MAX_EDUC,HOME_VAL,SAMEHOME,AREA\n";

    const double power = 1.5;
    const double phi = 60.0;
    for (int i = 0; i < rows; ++i) {
        // the first rows walk through every level so that levels appear in
        // their canonical order
        std::map<std::string, std::size_t> level;
        for (const auto& f : factors) {
            std::size_t k = 0;
            if (static_cast<std::size_t>(i) < f.levels.size()) {
                k = static_cast<std::size_t>(i);
            } else {
                std::discrete_distribution<std::size_t> d(f.weights.begin(), f.weights.end());
                k = d(rng);
            }
            level[f.name] = k;
        }
        const int kidsdriv = std::min(poisson(0.2), 4);
        const double travtime = std::max(5.0, std::round(33.0 + 16.0 * z(rng)));
        const double bluebook = std::round(std::exp(9.5 + 0.55 * z(rng)) / 10.0) * 10.0;
        const int retained = 1 + std::min(poisson(4.0), 24);
        const int npolicy = 1 + std::min(poisson(0.5), 8);
        const int mvr = std::min(poisson(1.7), 13);
        const double age = std::clamp(std::round(45.0 + 8.5 * z(rng)), 16.0, 81.0);
        const int homekids = std::min(poisson(0.7), 5);
        const double yoj = std::clamp(std::round(10.5 + 4.0 * z(rng)), 0.0, 23.0);
        const double income = std::max(0.0, std::round(std::exp(10.8 + 0.6 * z(rng))));
        const double home_val = u(rng) < 0.3 ? 0.0 : std::round(std::exp(12.2 + 0.5 * z(rng)));
        const double samehome = std::max(0.0, std::round(8.0 + 5.0 * z(rng)));

        const double eta = 5.8 + 0.3 * mvr + 1.5 * (level["REVOLKED"] == 1) + 1.1 * (level["AREA"] == 1) +
                           0.4 * (level["CAR_USE"] == 1) + 0.3 * kidsdriv - 0.3 * (level["MARRIED"] == 1);
        const double mu = std::exp(eta);
        const double rate = std::pow(mu, 2.0 - power) / (phi * (2.0 - power));
        const double shape = (2.0 - power) / (power - 1.0);
        const double scale = phi * (power - 1.0) * std::pow(mu, power - 1.0);
        const int claims = poisson(rate);
        double amount = 0.0;
        for (int k = 0; k < claims; ++k)
            amount += std::gamma_distribution<double>(shape, scale)(rng);
        amount = std::round(amount);
        const double recent = claims > 0 && u(rng) < 0.5 ? std::round(amount * u(rng)) : 0.0;

        char date[16];
        std::snprintf(date, sizeof date, "%02d/%02d/%04d", 1 + i % 12, 1 + (i * 7) % 28, 1990 + i % 10);
        auto lv = [&](const char* name) -> std::string {
            for (const auto& f : factors)
                if (std::string(f.name) == name)
                    return f.levels[level[name]];
            return "";
        };
        auto maybe = [&](double v, double p_missing) -> std::string {
            return u(rng) < p_missing ? std::string("NA") : format_value(v);
        };
        auto quoted = [](const std::string& s) { return s.find(' ') != std::string::npos ? '"' + s + '"' : s; };

        out << 100000000 + i * 137 << ',' << date << ',' << claims << ',' << format_value(amount) << ','
            << format_value(recent) << ',' << kidsdriv << ',' << format_value(travtime) << ',' << lv("CAR_USE")
            << ',' << format_value(bluebook) << ',' << retained << ',' << npolicy << ','
            << quoted(lv("CAR_TYPE")) << ',' << lv("RED_CAR") << ',' << lv("REVOLKED") << ',' << mvr << ','
            << (recent > 0 ? "Yes" : "No") << ',' << maybe(age, 0.01) << ',' << homekids << ','
            << maybe(yoj, 0.05) << ',' << maybe(income, 0.05) << ',' << lv("GENDER") << ',' << lv("MARRIED")
            << ',' << lv("PARENT1") << ',' << quoted(lv("JOBCLASS")) << ',' << quoted(lv("MAX_EDUC")) << ','
            << maybe(home_val, 0.05) << ',' << format_value(samehome) << ',' << lv("AREA") << '\n';
    }
}

} // namespace selinf
