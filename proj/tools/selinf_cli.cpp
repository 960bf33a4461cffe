#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "selinf/commands.hpp"

namespace {

using selinf::RunConfig;

// Binds flags to a scratch config and remembers how to copy each one onto
// the effective config, so that explicit flags override a config file.
class Binder
{
public:
    Binder(CLI::App* app, RunConfig& scratch) : app_(app), scratch_(scratch) {}

    template <typename Access>
    CLI::Option* add(const std::string& name, Access access, const std::string& help)
    {
        CLI::Option* opt = app_->add_option(name, access(scratch_), help);
        appliers_.emplace_back(opt, [this, access](RunConfig& dst) { access(dst) = access(scratch_); });
        return opt;
    }

    CLI::Option* add_list(const std::string& name, std::vector<std::string>& (*access)(RunConfig&),
                          const std::string& help)
    {
        return add(name, access, help)->delimiter(',');
    }

    void apply(RunConfig& dst) const
    {
        for (const auto& [opt, fn] : appliers_)
            if (opt->count() > 0)
                fn(dst);
    }

private:
    CLI::App* app_;
    RunConfig& scratch_;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> appliers_;
};

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

struct Subcommand
{
    CLI::App* app = nullptr;
    std::unique_ptr<Binder> binder;
    std::string config_file;
    std::string scenario_file;
    std::vector<std::string> references;
};

void add_data_options(Binder& b, Subcommand& s)
{
    b.add("--data", FIELD(data), "Input CSV file");
    b.add("--preset", FIELD(preset), "Column roles preset (autoclaim)");
    b.add("--target", FIELD(target), "Response column");
    b.add_list("--drop", FIELD(drop), "Columns to ignore (comma separated)");
    b.add_list("--categorical", FIELD(categorical), "Columns to one-hot encode (comma separated)");
    s.app->add_option("--reference", s.references, "Reference level as VARIABLE=LEVEL (repeatable)");
}

void add_model_options(Binder& b)
{
    b.add("--family", FIELD(family), "gaussian | poisson | negbin | tweedie");
    b.add("--power", FIELD(power), "Tweedie power in (1, 2)");
    b.add("--size", FIELD(size), "Negative-binomial size");
    b.add("--lambda", FIELD(lambda), "Lasso penalty; 0 selects it by cross-validation");
    b.add("--cv-folds", FIELD(cv_folds), "Cross-validation folds");
    b.add("--n-lambda", FIELD(n_lambda), "Length of the lambda grid");
    b.add("--lambda-ratio", FIELD(lambda_ratio), "Smallest grid lambda as a fraction of lambda_max");
    b.add("--cv-seed", FIELD(cv_seed), "Seed for fold assignment");
}

void add_interval_options(Binder& b, bool simulation)
{
    b.add("--level", FIELD(level), "Confidence level");
    b.add("--seed", FIELD(seed), "Bootstrap master seed");
    b.add("--workers", FIELD(workers), "Worker threads");
    b.add("--a-n", FIELD(a_n_constant), "Threshold constant c in a_n = c n^(-1/4)");
    b.add("--residual-type", FIELD(residual_type), "pearson | deviance | anscombe");
    b.add("--ci-variant", FIELD(ci_variant), "Residual-bootstrap bracket: hybrid | basic | percentile");
    b.add("--threshold", FIELD(threshold), "zero_small | printed");
    b.add("--lambda-mode", FIELD(lambda_mode), "Replicate lambda: cv | fixed");
    b.add("--strict-quantiles", FIELD(strict_quantiles), "Refuse brackets with empty tails (true/false)");
    b.add("--ridge-lambda2", FIELD(ridge_lambda2), "PLR ridge penalty; 0 means 1/n");
    b.add("--theta", FIELD(theta), "De-biasing precision estimate: direct | nodewise");
    b.add("--variance", FIELD(variance), "De-biased GLM variance: model | sandwich");
    if (simulation) {
        b.add("--replicates,-B", FIELD(scenario.B), "Bootstrap replicates per dataset");
        b.add("--stub", FIELD(stub), "Stub intervals: universal | point_zero");
        b.add("--log-dir", FIELD(log_dir), "Directory for resumable repetition logs");
    } else {
        b.add("--replicates,-B", FIELD(replicates), "Bootstrap replicates");
    }
}

void add_scenario_options(Binder& b, Subcommand& s)
{
    s.app->add_option("--scenario", s.scenario_file, "Scenario JSON file");
    b.add("--scenario-family", FIELD(scenario.family), "poisson | negbin");
    b.add("--n", FIELD(scenario.n), "Rows per dataset");
    b.add("--p", FIELD(scenario.p), "Design columns including the ones column");
    b.add("--repetitions,-R", FIELD(scenario.R), "Monte-Carlo repetitions");
    b.add("--scenario-seed", FIELD(scenario.seed), "Scenario master seed");
    b.add("--mean-low", FIELD(scenario.mean_low), "Lower bound of feature means");
    b.add("--mean-high", FIELD(scenario.mean_high), "Upper bound of feature means");
    b.add("--scenario-size", FIELD(scenario.size), "Negative-binomial size of the scenario");
    b.add("--beta", FIELD(scenario.beta), "True coefficients (comma separated)")->delimiter(',');
    add_model_options(b);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Post-selection confidence intervals for penalized GLMs"};
    app.require_subcommand(1);
    RunConfig scratch;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"fit", "Fit a cross-validated lasso GLM"},
        {"ci", "Confidence intervals for every coefficient"},
        {"simulate", "Coverage experiment on a synthetic scenario"},
        {"compare", "Interval widths of several methods on common datasets"},
    };
    std::vector<Subcommand> subs(commands.size());
    for (std::size_t k = 0; k < commands.size(); ++k) {
        Subcommand& s = subs[k];
        s.app = app.add_subcommand(commands[k].first, commands[k].second);
        s.binder = std::make_unique<Binder>(s.app, scratch);
        s.app->add_option("--config", s.config_file, "Config or manifest JSON; explicit flags override it");
        Binder& b = *s.binder;
        b.add("--out", FIELD(out_dir), "Output directory");
        const std::string& name = commands[k].first;
        if (name == "fit" || name == "ci") {
            add_data_options(b, s);
            add_model_options(b);
        }
        if (name == "ci") {
            b.add("--method", FIELD(method), "plr | debias | resid-boot | paired-boot");
            add_interval_options(b, false);
        }
        if (name == "simulate") {
            b.add("--method", FIELD(method), "plr | debias | resid-boot | paired-boot | stub");
            add_scenario_options(b, s);
            add_interval_options(b, true);
        }
        if (name == "compare") {
            b.add_list("--methods", FIELD(methods), "Methods to compare (comma separated)");
            add_scenario_options(b, s);
            add_interval_options(b, true);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : selinf::kExitUsage;
    }

    for (std::size_t k = 0; k < subs.size(); ++k) {
        Subcommand& s = subs[k];
        if (!s.app->parsed())
            continue;
        RunConfig config;
        try {
            if (!s.config_file.empty())
                config = selinf::load_run_config(s.config_file);
            if (!s.scenario_file.empty())
                config.scenario = selinf::load_scenario_config(s.scenario_file);
            s.binder->apply(config);
            for (const auto& ref : s.references) {
                const auto eq = ref.find('=');
                if (eq == std::string::npos || eq == 0)
                    throw selinf::Error(selinf::ErrorKind::config, "--reference expects VARIABLE=LEVEL, got '" + ref + "'");
                config.reference_levels[ref.substr(0, eq)] = ref.substr(eq + 1);
            }
        } catch (const std::exception& e) {
            std::cerr << selinf::error_record(e) << '\n';
            const auto* err = dynamic_cast<const selinf::Error*>(&e);
            return err ? selinf::exit_code(err->kind()) : selinf::kExitUnexpected;
        }
        config.command = commands[k].first;
        return selinf::run_command(config, std::cerr);
    }
    return selinf::kExitUsage;
}
