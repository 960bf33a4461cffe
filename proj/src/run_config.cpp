#include "selinf/run_config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include <json.hpp>

#include "selinf/error.hpp"

namespace selinf {

using json = nlohmann::ordered_json;

namespace {

// Field table shared by the writer and the strict reader.
template <typename Visitor>
void visit_scenario(ScenarioConfig& s, Visitor&& v)
{
    v("family", s.family);
    v("n", s.n);
    v("p", s.p);
    v("R", s.R);
    v("B", s.B);
    v("seed", s.seed);
    v("mean_low", s.mean_low);
    v("mean_high", s.mean_high);
    v("size", s.size);
    v("beta", s.beta);
}

template <typename Visitor>
void visit_config(RunConfig& c, Visitor&& v)
{
    v("command", c.command);
    v("data", c.data);
    v("preset", c.preset);
    v("target", c.target);
    v("drop", c.drop);
    v("categorical", c.categorical);
    v("reference_levels", c.reference_levels);
    v("family", c.family);
    v("power", c.power);
    v("size", c.size);
    v("lambda", c.lambda);
    v("cv_folds", c.cv_folds);
    v("n_lambda", c.n_lambda);
    v("lambda_ratio", c.lambda_ratio);
    v("cv_seed", c.cv_seed);
    v("method", c.method);
    v("methods", c.methods);
    v("level", c.level);
    v("replicates", c.replicates);
    v("seed", c.seed);
    v("workers", c.workers);
    v("a_n_constant", c.a_n_constant);
    v("residual_type", c.residual_type);
    v("ci_variant", c.ci_variant);
    v("threshold", c.threshold);
    v("lambda_mode", c.lambda_mode);
    v("strict_quantiles", c.strict_quantiles);
    v("ridge_lambda2", c.ridge_lambda2);
    v("theta", c.theta);
    v("variance", c.variance);
    v("stub", c.stub);
    v("out_dir", c.out_dir);
    v("log_dir", c.log_dir);
}

json scenario_json(ScenarioConfig s)
{
    json j = json::object();
    visit_scenario(s, [&](const char* key, const auto& field) { j[key] = field; });
    return j;
}

json config_json(RunConfig c)
{
    json j = json::object();
    visit_config(c, [&](const char* key, const auto& field) { j[key] = field; });
    j["scenario"] = scenario_json(c.scenario);
    return j;
}

template <typename Fields>
void read_fields(const json& j, const char* where, Fields&& visit, std::set<std::string> extra = {})
{
    if (!j.is_object())
        throw Error(ErrorKind::config, std::string(where) + " must be a JSON object");
    std::set<std::string> known = std::move(extra);
    visit([&](const char* key, auto& field) {
        known.insert(key);
        if (!j.contains(key))
            return;
        try {
            j.at(key).get_to(field);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::config, std::string("bad value for '") + key + "' in " + where + ": " + e.what());
        }
    });
    for (const auto& item : j.items())
        if (!known.contains(item.key()))
            throw Error(ErrorKind::config, "unknown key '" + item.key() + "' in " + where);
}

ScenarioConfig scenario_from_json(const json& j)
{
    ScenarioConfig s;
    read_fields(j, "scenario", [&](auto&& v) { visit_scenario(s, v); });
    return s;
}

RunConfig config_from_json(const json& j)
{
    RunConfig c;
    read_fields(j, "config", [&](auto&& v) { visit_config(c, v); }, {"scenario"});
    if (j.contains("scenario"))
        c.scenario = scenario_from_json(j.at("scenario"));
    return c;
}

json parse(const std::string& text, const std::string& what)
{
    try {
        return json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::config, "cannot parse " + what + ": " + e.what());
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

std::string to_json_text(const RunConfig& config)
{
    return config_json(config).dump(2) + "\n";
}

RunConfig run_config_from_json_text(const std::string& text)
{
    return config_from_json(parse(text, "config"));
}

RunConfig load_run_config(const std::filesystem::path& path)
{
    const json j = parse(read_file(path), path.string());
    if (j.is_object() && j.contains("config") && j.at("config").is_object())
        return config_from_json(j.at("config"));
    return config_from_json(j);
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path)
{
    return scenario_from_json(parse(read_file(path), path.string()));
}

std::string hash_text(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string config_hash(const RunConfig& config)
{
    return hash_text(config_json(config).dump());
}

std::string file_hash(const std::filesystem::path& path)
{
    return hash_text(read_file(path));
}

} // namespace selinf
