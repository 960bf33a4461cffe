#include "selinf/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace selinf {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename Enum>
Enum pick(const std::string& value, const char* what, std::initializer_list<std::pair<const char*, Enum>> options)
{
    std::string allowed;
    for (const auto& [name, e] : options) {
        if (value == name)
            return e;
        allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    throw Error(ErrorKind::config, std::string("unknown ") + what + " '" + value + "' (expected " + allowed + ")");
}

CiMethod method_of(const std::string& name)
{
    return name == "stub" ? CiMethod::stub : parse_ci_method(name);
}

std::filesystem::path prepare_out_dir(const RunConfig& config)
{
    const std::filesystem::path dir = config.out_dir.empty() ? "." : config.out_dir;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::io, "cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

template <typename Writer>
std::filesystem::path write_file(const std::filesystem::path& path, Writer&& writer)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::io, "cannot write " + path.string());
    writer(out);
    out.flush();
    if (!out)
        throw Error(ErrorKind::io, "write failed on " + path.string());
    return path;
}

json dataset_json(const RunConfig& config, const Dataset& data)
{
    json d;
    d["path"] = config.data;
    d["fnv1a"] = file_hash(config.data);
    d["rows"] = data.X.rows();
    d["target"] = data.target;
    d["features"] = data.feature_names;
    json enc = json::array();
    for (const auto& e : data.encoding_map) {
        json item;
        item["variable"] = e.variable;
        item["reference"] = e.reference;
        json levels = json::array();
        for (std::size_t k = 0; k < e.levels.size(); ++k)
            levels.push_back({{"level", e.levels[k]}, {"feature", data.feature_names[static_cast<std::size_t>(e.columns[k])]}});
        item["levels"] = levels;
        enc.push_back(item);
    }
    d["encoding_map"] = enc;
    json imp = json::array();
    for (const auto& r : data.imputation_log)
        imp.push_back({{"column", r.column}, {"imputed", r.imputed}, {"value", r.value}});
    d["imputation_log"] = imp;
    d["warnings"] = data.warnings;
    return d;
}

CommandOutput finish(const RunConfig& config, const std::filesystem::path& dir, std::vector<std::filesystem::path> files,
                     json extra)
{
    json m;
    m["tool"] = "selinf";
    m["version"] = kToolVersion;
    m["command"] = config.command;
    m["config_hash"] = config_hash(config);
    m["config"] = json::parse(to_json_text(config));
    for (auto& [key, value] : extra.items())
        m[key] = value;
    json outputs = json::array();
    for (const auto& f : files)
        outputs.push_back({{"file", f.filename().string()}, {"fnv1a", file_hash(f)}});
    m["outputs"] = outputs;
    files.push_back(write_file(dir / "manifest.json", [&](std::ostream& out) { out << m.dump(2) << '\n'; }));
    return {std::move(files)};
}

Dataset load_data(const RunConfig& config)
{
    if (config.data.empty())
        throw Error(ErrorKind::config, "no data file given");
    return load_csv(config.data, csv_options(config));
}

std::vector<std::string> term_names(const Dataset& data)
{
    std::vector<std::string> names{"(Intercept)"};
    names.insert(names.end(), data.feature_names.begin(), data.feature_names.end());
    return names;
}

CvResult choose_lambda(const RunConfig& config, const Dataset& data, const Family& family, const SolverConfig& solver)
{
    if (config.lambda < 0.0)
        throw Error(ErrorKind::config, "lambda must be nonnegative");
    if (config.lambda > 0.0) {
        CvResult cv;
        cv.lambda_grid = Vector::Constant(1, config.lambda);
        cv.best_lambda = config.lambda;
        return cv;
    }
    return select_lambda(data.X, data.y, family, config.cv_folds, config.n_lambda, config.lambda_ratio,
                         config.cv_seed, solver);
}

json report_json(const CoverageReport& r)
{
    return {{"method", to_string(r.method)},
            {"scenario_hash", r.scenario_hash},
            {"nonzero_rate", r.nonzero_rate},
            {"zero_rate", r.zero_rate},
            {"nonzero_mean_width", r.nonzero_mean_width},
            {"total_fits", r.total_fits},
            {"max_clamp_fraction", r.max_clamp_fraction},
            {"flagged_repetitions", r.flagged_repetitions},
            {"resumed_repetitions", r.resumed_repetitions}};
}

} // namespace

int exit_code(ErrorKind kind) noexcept
{
    return 10 + static_cast<int>(kind);
}

CsvOptions csv_options(const RunConfig& config)
{
    CsvOptions o;
    if (config.preset == "autoclaim")
        o = autoclaim_options();
    else if (!config.preset.empty())
        throw Error(ErrorKind::config, "unknown preset '" + config.preset + "'");
    if (!config.target.empty())
        o.target = config.target;
    if (!config.drop.empty())
        o.drop_columns = config.drop;
    if (!config.categorical.empty())
        o.categorical_columns = config.categorical;
    for (const auto& [k, v] : config.reference_levels)
        o.reference_levels[k] = v;
    return o;
}

Family make_family(const RunConfig& config)
{
    const FamilyKind kind = pick<FamilyKind>(config.family, "family",
                                             {{"gaussian", FamilyKind::gaussian},
                                              {"poisson", FamilyKind::poisson},
                                              {"negbin", FamilyKind::negbin},
                                              {"tweedie", FamilyKind::tweedie}});
    switch (kind) {
    case FamilyKind::gaussian: return Family::gaussian();
    case FamilyKind::poisson: return Family::poisson();
    case FamilyKind::negbin: return Family::negbin(config.size);
    case FamilyKind::tweedie: return Family::tweedie(config.power);
    }
    return Family::gaussian();
}

SimScenario make_scenario(const RunConfig& config)
{
    const ScenarioConfig& s = config.scenario;
    const FamilyKind kind =
        pick<FamilyKind>(s.family, "scenario family", {{"poisson", FamilyKind::poisson}, {"negbin", FamilyKind::negbin}});
    SimScenario sc = benchmark_scenario(kind, s.n, s.R, s.B, s.seed);
    sc.p = s.p;
    sc.mean_low = s.mean_low;
    sc.mean_high = s.mean_high;
    if (kind == FamilyKind::negbin)
        sc.family = Family::negbin(s.size);
    if (s.beta.empty()) {
        sc.beta_true = benchmark_beta(s.p);
    } else {
        sc.beta_true = Eigen::Map<const Vector>(s.beta.data(), static_cast<Index>(s.beta.size()));
    }
    sc.validate();
    return sc;
}

ExperimentConfig make_experiment_config(const RunConfig& config)
{
    ExperimentConfig e;
    BootstrapConfig& b = e.boot;
    b.replicates = config.replicates;
    b.level = config.level;
    b.master_seed = config.seed;
    b.a_n_constant = config.a_n_constant;
    b.residual_type = pick<ResidualType>(config.residual_type, "residual type",
                                         {{"pearson", ResidualType::pearson},
                                          {"deviance", ResidualType::deviance},
                                          {"anscombe", ResidualType::anscombe}});
    b.ci_variant = pick<BracketVariant>(config.ci_variant, "interval variant",
                                        {{"hybrid", BracketVariant::hybrid},
                                         {"basic", BracketVariant::basic},
                                         {"percentile", BracketVariant::percentile}});
    b.threshold = pick<ThresholdRule>(config.threshold, "threshold rule",
                                      {{"zero_small", ThresholdRule::zero_small}, {"printed", ThresholdRule::printed}});
    b.lambda_mode = pick<LambdaMode>(config.lambda_mode, "lambda mode",
                                     {{"cv", LambdaMode::cv_per_replicate}, {"fixed", LambdaMode::fixed}});
    b.strict_quantiles = config.strict_quantiles;
    b.workers = config.workers;
    b.ridge_lambda2 = config.ridge_lambda2;
    e.cv_folds = config.cv_folds;
    e.n_lambda = config.n_lambda;
    e.lambda_ratio = config.lambda_ratio;
    e.workers = config.workers;
    e.stub = pick<StubKind>(config.stub, "stub", {{"universal", StubKind::universal}, {"point_zero", StubKind::point_zero}});
    e.theta = pick<ThetaMethod>(config.theta, "theta method",
                                {{"direct", ThetaMethod::direct}, {"nodewise", ThetaMethod::nodewise}});
    e.variance = pick<GlmVariance>(config.variance, "variance",
                                   {{"model", GlmVariance::model}, {"sandwich", GlmVariance::sandwich}});
    if (!config.log_dir.empty())
        e.log_dir = config.log_dir;
    b.validate();
    return e;
}

CommandOutput cmd_fit(const RunConfig& config)
{
    const Family family = make_family(config);
    const Dataset data = load_data(config);
    const SolverConfig solver;
    const CvResult cv = choose_lambda(config, data, family, solver);
    const FitResult fit = fit_penalized_glm(data.X, data.y, family, PenaltySpec::lasso(cv.best_lambda), solver);
    const auto dir = prepare_out_dir(config);
    const auto names = term_names(data);

    std::vector<std::filesystem::path> files;
    files.push_back(write_file(dir / "coefficients.csv", [&](std::ostream& out) {
        const Vector coef = fit.coefficients();
        out << "term,estimate\n";
        for (Index j = 0; j < coef.size(); ++j)
            out << names[static_cast<std::size_t>(j)] << ',' << number(coef(j)) << '\n';
    }));
    files.push_back(write_file(dir / "cv.csv", [&](std::ostream& out) {
        out << "lambda,mean_cv_loss,se_cv_loss,selected\n";
        for (Index k = 0; k < cv.lambda_grid.size(); ++k) {
            const bool has_loss = cv.mean_cv_loss.size() == cv.lambda_grid.size();
            out << number(cv.lambda_grid(k)) << ',' << (has_loss ? number(cv.mean_cv_loss(k)) : "") << ','
                << (has_loss ? number(cv.se_cv_loss(k)) : "") << ',' << (k == cv.best_index ? 1 : 0) << '\n';
        }
    }));
    json extra;
    extra["data"] = dataset_json(config, data);
    extra["summary"] = {{"lambda", fit.penalty.lambda1},
                        {"active", fit.active_set.size()},
                        {"converged", fit.converged},
                        {"dispersion", fit.dispersion},
                        {"iterations", fit.n_iterations}};
    return finish(config, dir, std::move(files), extra);
}

CommandOutput cmd_ci(const RunConfig& config)
{
    const Family family = make_family(config);
    ExperimentConfig exp = make_experiment_config(config);
    const CiMethod method = method_of(config.method);
    const Dataset data = load_data(config);
    exp.boot.term_names = term_names(data);
    const CvResult cv = choose_lambda(config, data, family, exp.boot.solver);
    long long fits = 0;
    double clamp = 0.0;
    const IntervalTable table =
        run_method(method, data.X, data.y, family, exp, config.replicates, config.seed, &fits, &clamp, &cv);
    const auto dir = prepare_out_dir(config);
    std::vector<std::filesystem::path> files;
    files.push_back(write_file(dir / "intervals.csv", [&](std::ostream& out) { table.write_csv(out); }));
    json extra;
    extra["data"] = dataset_json(config, data);
    extra["summary"] = {{"lambda", cv.best_lambda},
                        {"total_fits", fits},
                        {"clamp_fraction", clamp},
                        {"clamp_flagged", clamp > kClampFlagFraction}};
    return finish(config, dir, std::move(files), extra);
}

CommandOutput cmd_simulate(const RunConfig& config)
{
    const SimScenario scenario = make_scenario(config);
    const ExperimentConfig exp = make_experiment_config(config);
    const CoverageReport report = run_coverage_experiment(scenario, method_of(config.method), exp);
    const auto dir = prepare_out_dir(config);
    std::vector<std::filesystem::path> files;
    files.push_back(write_file(dir / "coverage.csv", [&](std::ostream& out) { write_coverage_csv(out, {report}); }));
    json extra;
    extra["scenario_hash"] = scenario.hash();
    extra["summary"] = json::array({report_json(report)});
    return finish(config, dir, std::move(files), extra);
}

CommandOutput cmd_compare(const RunConfig& config)
{
    const SimScenario scenario = make_scenario(config);
    const ExperimentConfig exp = make_experiment_config(config);
    std::vector<CiMethod> methods;
    for (const auto& m : config.methods)
        methods.push_back(method_of(m));
    const auto reports = width_comparison(scenario, methods, exp);
    const auto dir = prepare_out_dir(config);
    std::vector<std::filesystem::path> files;
    files.push_back(write_file(dir / "coverage.csv", [&](std::ostream& out) { write_coverage_csv(out, reports); }));
    json extra;
    extra["scenario_hash"] = scenario.hash();
    json summary = json::array();
    for (const auto& r : reports)
        summary.push_back(report_json(r));
    extra["summary"] = summary;
    return finish(config, dir, std::move(files), extra);
}

std::string error_record(const std::exception& e)
{
    json rec;
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        rec["error"] = to_string(err->kind());
        rec["exit_code"] = exit_code(err->kind());
    } else {
        rec["error"] = "unexpected";
        rec["exit_code"] = kExitUnexpected;
    }
    rec["message"] = e.what();
    if (const auto* d = dynamic_cast<const DataError*>(&e)) {
        rec["row"] = d->row();
        rec["column"] = d->column();
    } else if (const auto* f = dynamic_cast<const FoldDegeneracy*>(&e)) {
        rec["fold"] = f->fold();
    } else if (const auto* r = dynamic_cast<const ReplicateFailure*>(&e)) {
        rec["replicate"] = r->replicate();
    } else if (const auto* c = dynamic_cast<const ConditioningError*>(&e)) {
        rec["condition"] = c->condition();
    } else if (const auto* o = dynamic_cast<const NumericOverflow*>(&e)) {
        rec["index"] = o->index();
    }
    return rec.dump();
}

int run_command(const RunConfig& config, std::ostream& err)
{
    try {
        if (config.command == "fit")
            cmd_fit(config);
        else if (config.command == "ci")
            cmd_ci(config);
        else if (config.command == "simulate")
            cmd_simulate(config);
        else if (config.command == "compare")
            cmd_compare(config);
        else
            throw Error(ErrorKind::config, "unknown command '" + config.command + "'");
        return 0;
    } catch (const std::exception& e) {
        const std::string rec = error_record(e);
        err << rec << '\n';
        if (!config.out_dir.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(config.out_dir, ec);
            std::ofstream out(std::filesystem::path(config.out_dir) / "error.json");
            if (out)
                out << rec << '\n';
        }
        const auto* e2 = dynamic_cast<const Error*>(&e);
        return e2 ? exit_code(e2->kind()) : kExitUnexpected;
    }
}

} // namespace selinf
