#include "selinf/simbench.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "selinf/debias.hpp"
#include "selinf/error.hpp"
#include "selinf/parallel.hpp"
#include "selinf/stats.hpp"

namespace selinf {

namespace {

enum Stream : std::uint64_t { means_stream = 0x6d65616e73ULL, design_stream = 1, response_stream, cv_stream, method_stream };

std::string number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex(std::uint64_t v)
{
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

// Everything in the config that changes the intervals a method produces.
std::string config_digest(const ExperimentConfig& c, CiMethod method)
{
    std::ostringstream s;
    const auto& b = c.boot;
    s << to_string(method) << ';' << number(b.level) << ';' << number(b.a_n_constant) << ';'
      << static_cast<int>(b.residual_type) << ';' << static_cast<int>(b.ci_variant) << ';'
      << static_cast<int>(b.threshold) << ';' << static_cast<int>(b.lambda_mode) << ';' << b.max_retries << ';'
      << number(b.ridge_lambda2) << ';' << b.cv_folds << ';' << b.n_lambda << ';' << number(b.lambda_ratio) << ';'
      << c.cv_folds << ';' << c.n_lambda << ';' << number(c.lambda_ratio) << ';' << static_cast<int>(c.stub) << ';'
      << b.solver.max_irls << ';' << b.solver.max_sweeps << ';' << number(b.solver.tol) << ';'
      << number(b.solver.inner_tol) << ';' << b.solver.standardize << ';' << static_cast<int>(b.solver.weights) << ';'
      << static_cast<int>(c.theta) << ';' << static_cast<int>(c.variance);
    return s.str();
}

struct RepRecord
{
    std::vector<double> lower;
    std::vector<double> upper;
    long long fits = 0;
    double clamp_fraction = 0.0;
};

using RepMap = std::map<int, RepRecord>;

std::string run_key(const SimScenario& scenario, const ExperimentConfig& config, CiMethod method)
{
    return hex(fnv1a(scenario.hash() + '|' + config_digest(config, method)));
}

// Log layout: one header line, then one line per coefficient per repetition:
// rep,coefficient_index,lower,upper,fits,clamp_fraction
RepMap read_log(const std::filesystem::path& path, Index p, const std::string* expected_key)
{
    RepMap reps;
    std::ifstream in(path);
    if (!in)
        return reps;
    std::string line;
    if (!std::getline(in, line))
        return reps;
    if (expected_key && line != "# run " + *expected_key)
        throw Error(ErrorKind::config, "log " + path.string() + " was written by a different scenario or config");
    std::map<int, std::map<Index, std::pair<double, double>>> rows;
    while (std::getline(in, line)) {
        int r = 0;
        long long j = 0, fits = 0;
        double lo = 0.0, hi = 0.0, clamp = 0.0;
        char lo_s[64], hi_s[64];
        if (std::sscanf(line.c_str(), "%d,%lld,%63[^,],%63[^,],%lld,%lf", &r, &j, lo_s, hi_s, &fits, &clamp) != 6)
            continue; // torn line from an interrupted write
        lo = std::strtod(lo_s, nullptr);
        hi = std::strtod(hi_s, nullptr);
        if (j < 0 || j >= p)
            continue;
        rows[r][j] = {lo, hi};
        auto& rec = reps[r];
        rec.fits = fits;
        rec.clamp_fraction = clamp;
    }
    for (auto it = reps.begin(); it != reps.end();) {
        const auto& cols = rows[it->first];
        if (static_cast<Index>(cols.size()) != p) {
            it = reps.erase(it);
            continue;
        }
        for (const auto& [j, bounds] : cols) {
            it->second.lower.push_back(bounds.first);
            it->second.upper.push_back(bounds.second);
        }
        ++it;
    }
    return reps;
}

class RepLog
{
public:
    RepLog(std::filesystem::path path, std::string key) : path_(std::move(path)), key_(std::move(key)) {}

    void open_for_append()
    {
        std::filesystem::create_directories(path_.parent_path());
        const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
        bool needs_newline = false;
        if (!fresh) {
            std::ifstream in(path_, std::ios::binary);
            in.seekg(-1, std::ios::end);
            char last = '\n';
            in.get(last);
            needs_newline = last != '\n';
        }
        out_.open(path_, std::ios::app);
        if (!out_)
            throw Error(ErrorKind::io, "cannot open log " + path_.string());
        if (fresh)
            out_ << "# run " << key_ << '\n';
        else if (needs_newline)
            out_ << '\n';
        out_.flush();
    }

    void append(int r, const RepRecord& rec)
    {
        std::ostringstream block;
        for (std::size_t j = 0; j < rec.lower.size(); ++j)
            block << r << ',' << j << ',' << number(rec.lower[j]) << ',' << number(rec.upper[j]) << ',' << rec.fits
                  << ',' << number(rec.clamp_fraction) << '\n';
        std::lock_guard lock(mutex_);
        out_ << block.str();
        out_.flush();
        if (!out_)
            throw Error(ErrorKind::io, "write failed on log " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::string key_;
    std::ofstream out_;
    std::mutex mutex_;
};

CoverageReport summarize(const SimScenario& scenario, CiMethod method, const RepMap& reps)
{
    CoverageReport report;
    report.method = method;
    report.scenario_hash = scenario.hash();
    const Index p = scenario.p;
    report.rows.resize(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        auto& row = report.rows[static_cast<std::size_t>(j)];
        row.index = j;
        row.true_beta = scenario.beta_true(j);
    }
    for (const auto& [r, rec] : reps) {
        report.total_fits += rec.fits;
        report.max_clamp_fraction = std::max(report.max_clamp_fraction, rec.clamp_fraction);
        if (rec.clamp_fraction > kClampFlagFraction)
            ++report.flagged_repetitions;
        for (Index j = 0; j < p; ++j) {
            auto& row = report.rows[static_cast<std::size_t>(j)];
            const double lo = rec.lower[static_cast<std::size_t>(j)];
            const double hi = rec.upper[static_cast<std::size_t>(j)];
            if (lo <= row.true_beta && row.true_beta <= hi)
                ++row.covered;
            ++row.repetitions;
            row.mean_width += hi - lo;
        }
    }
    double nz_rate = 0.0, z_rate = 0.0, nz_width = 0.0;
    int nz = 0, z = 0;
    for (auto& row : report.rows) {
        if (row.repetitions > 0) {
            row.ci_rate = static_cast<double>(row.covered) / row.repetitions;
            row.mean_width /= row.repetitions;
        }
        if (row.index == 0)
            continue;
        if (row.true_beta != 0.0) {
            nz_rate += row.ci_rate;
            nz_width += row.mean_width;
            ++nz;
        } else {
            z_rate += row.ci_rate;
            ++z;
        }
    }
    report.nonzero_rate = nz ? nz_rate / nz : 0.0;
    report.nonzero_mean_width = nz ? nz_width / nz : 0.0;
    report.zero_rate = z ? z_rate / z : 0.0;
    return report;
}

IntervalTable stub_table(StubKind kind, Index p, double level)
{
    IntervalTable t;
    t.method = CiMethod::stub;
    t.level = level;
    const double inf = std::numeric_limits<double>::infinity();
    const auto names = default_term_names(static_cast<std::size_t>(p - 1), true);
    for (Index j = 0; j < p; ++j) {
        IntervalRow row;
        row.term = names[static_cast<std::size_t>(j)];
        row.estimate = 0.0;
        row.lower = kind == StubKind::universal ? -inf : 0.0;
        row.upper = kind == StubKind::universal ? inf : 0.0;
        t.rows.push_back(row);
    }
    return t;
}

std::vector<CoverageReport> run_experiment(const SimScenario& scenario, const std::vector<CiMethod>& methods,
                                           const ExperimentConfig& config)
{
    scenario.validate();
    config.boot.validate();
    const std::size_t m = methods.size();
    std::vector<RepMap> done(m);
    std::vector<std::unique_ptr<RepLog>> logs(m);
    if (!config.log_dir.empty()) {
        for (std::size_t k = 0; k < m; ++k) {
            const auto path = log_path(config.log_dir, scenario, methods[k]);
            const std::string key = run_key(scenario, config, methods[k]);
            done[k] = read_log(path, scenario.p, &key);
            logs[k] = std::make_unique<RepLog>(path, key);
            logs[k]->open_for_append();
        }
    }
    std::vector<int> resumed(m, 0);
    for (std::size_t k = 0; k < m; ++k)
        for (auto it = done[k].begin(); it != done[k].end();)
            if (it->first >= scenario.R)
                it = done[k].erase(it);
            else
                ++it, ++resumed[k];

    std::vector<std::vector<std::optional<RepRecord>>> fresh(m, std::vector<std::optional<RepRecord>>(scenario.R));
    std::mutex progress_mutex;

    parallel_for(static_cast<std::size_t>(scenario.R), config.workers, [&](std::size_t ri) {
        const int r = static_cast<int>(ri);
        bool needed = false;
        for (std::size_t k = 0; k < m; ++k)
            needed = needed || !done[k].contains(r);
        if (!needed)
            return;
        const std::uint64_t rep_seed = derive_seed(scenario.master_seed, ri);
        const Matrix design = generate_design(scenario, derive_seed(rep_seed, design_stream));
        const Vector y = generate_response(design, scenario, derive_seed(rep_seed, response_stream));
        const Matrix X = design.rightCols(scenario.p - 1);

        std::optional<CvResult> cv;
        for (std::size_t k = 0; k < m; ++k) {
            if (done[k].contains(r))
                continue;
            RepRecord rec;
            try {
                IntervalTable table;
                if (methods[k] == CiMethod::stub) {
                    table = stub_table(config.stub, scenario.p, config.boot.level);
                } else {
                    ExperimentConfig c = config;
                    c.boot.replicates = scenario.B;
                    if (!cv) {
                        cv = select_lambda(X, y, scenario.family, config.cv_folds, config.n_lambda,
                                           config.lambda_ratio, derive_seed(rep_seed, cv_stream), config.boot.solver);
                        rec.fits += static_cast<long long>(config.cv_folds) * config.n_lambda;
                    }
                    table = run_method(methods[k], X, y, scenario.family, c, scenario.B,
                                       derive_seed(rep_seed, method_stream), &rec.fits, &rec.clamp_fraction, &*cv);
                }
                for (const auto& row : table.rows) {
                    rec.lower.push_back(row.lower);
                    rec.upper.push_back(row.upper);
                }
            } catch (const Error& e) {
                throw Error(e.kind(), "repetition " + std::to_string(r) + " (" + to_string(methods[k]) +
                                          "): " + e.what());
            }
            if (logs[k])
                logs[k]->append(r, rec);
            fresh[k][ri] = std::move(rec);
        }
        if (config.progress) {
            std::lock_guard lock(progress_mutex);
            config.progress("repetition " + std::to_string(r + 1) + "/" + std::to_string(scenario.R) + " done");
        }
    });

    std::vector<CoverageReport> reports;
    for (std::size_t k = 0; k < m; ++k) {
        RepMap all = std::move(done[k]);
        for (int r = 0; r < scenario.R; ++r)
            if (fresh[k][static_cast<std::size_t>(r)])
                all[r] = std::move(*fresh[k][static_cast<std::size_t>(r)]);
        CoverageReport rep = summarize(scenario, methods[k], all);
        rep.resumed_repetitions = resumed[k];
        reports.push_back(std::move(rep));
    }
    return reports;
}

} // namespace

void SimScenario::validate() const
{
    if (n < 2 || p < 2)
        throw Error(ErrorKind::config, "scenario needs n >= 2 and p >= 2");
    if (beta_true.size() != p)
        throw Error(ErrorKind::config, "beta_true must have p entries");
    if (!(mean_low <= mean_high))
        throw Error(ErrorKind::config, "feature mean range is empty");
    if (B < 1 || R < 1)
        throw Error(ErrorKind::config, "B and R must be positive");
    family.validate();
    if (family.kind != FamilyKind::poisson && family.kind != FamilyKind::negbin)
        throw Error(ErrorKind::unsupported_family, "simulation scenarios support poisson and negbin");
}

std::string SimScenario::hash() const
{
    std::ostringstream s;
    s << name << ';' << n << ';' << p << ';';
    for (Index j = 0; j < beta_true.size(); ++j)
        s << number(beta_true(j)) << ',';
    s << ';' << static_cast<int>(family.kind) << ';' << number(family.size) << ';' << number(mean_low) << ';'
      << number(mean_high) << ';' << B << ';' << R << ';' << master_seed;
    return hex(fnv1a(s.str()));
}

Vector benchmark_beta(Index p)
{
    Vector beta = Vector::Zero(p);
    beta(0) = 0.5;
    for (Index i = 1; i < std::min<Index>(p, 11); ++i)
        beta(i) = static_cast<double>(i) / 15.0;
    return beta;
}

SimScenario benchmark_scenario(FamilyKind kind, Index n, int R, int B, std::uint64_t seed)
{
    SimScenario s;
    s.n = n;
    s.R = R;
    s.B = B;
    s.master_seed = seed;
    s.beta_true = benchmark_beta(s.p);
    if (kind == FamilyKind::poisson) {
        s.name = "poisson";
        s.family = Family::poisson();
    } else if (kind == FamilyKind::negbin) {
        s.name = "negbin";
        s.family = Family::negbin(4.5);
    } else {
        throw Error(ErrorKind::unsupported_family, "benchmark scenarios are poisson or negbin");
    }
    return s;
}

Vector feature_means(const SimScenario& scenario)
{
    Rng rng(derive_seed(scenario.master_seed, means_stream));
    std::uniform_real_distribution<double> u(scenario.mean_low, scenario.mean_high);
    Vector m = Vector::Zero(scenario.p);
    for (Index j = 1; j < scenario.p; ++j)
        m(j) = u(rng);
    return m;
}

Matrix generate_design(const SimScenario& scenario, std::uint64_t seed)
{
    scenario.validate();
    const Vector m = feature_means(scenario);
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix X(scenario.n, scenario.p);
    X.col(0).setOnes();
    for (Index j = 1; j < scenario.p; ++j)
        for (Index i = 0; i < scenario.n; ++i)
            X(i, j) = m(j) + z(rng);
    return X;
}

Vector generate_response(const Matrix& X, const SimScenario& scenario, std::uint64_t seed, double* clamp_rate)
{
    if (X.cols() != scenario.beta_true.size())
        throw Error(ErrorKind::dimension_mismatch, "design and beta_true disagree in width");
    const Vector eta = X * scenario.beta_true;
    Rng rng(seed);
    Vector y(X.rows());
    Index clamped = 0;
    for (Index i = 0; i < X.rows(); ++i) {
        bool hit = false;
        const double mu = std::exp(unit::clamp_eta(eta(i), hit));
        clamped += hit;
        double rate = mu;
        if (scenario.family.kind == FamilyKind::negbin) {
            const double size = scenario.family.size;
            rate = std::gamma_distribution<double>(size, mu / size)(rng);
        }
        y(i) = static_cast<double>(std::poisson_distribution<long long>(rate)(rng));
    }
    if (clamp_rate)
        *clamp_rate = X.rows() ? static_cast<double>(clamped) / static_cast<double>(X.rows()) : 0.0;
    return y;
}

IntervalTable run_method(CiMethod method, const Matrix& X, const Vector& y, const Family& family,
                         const ExperimentConfig& config, int replicates, std::uint64_t seed, long long* fits,
                         double* clamp_fraction, const CvResult* cv_in)
{
    BootstrapConfig boot = config.boot;
    boot.replicates = replicates;
    boot.master_seed = seed;
    boot.cv_folds = config.cv_folds;
    boot.n_lambda = config.n_lambda;
    boot.lambda_ratio = config.lambda_ratio;
    if (method == CiMethod::stub)
        return stub_table(config.stub, X.cols() + 1, boot.level);

    const CvResult cv = cv_in ? *cv_in
                              : select_lambda(X, y, family, config.cv_folds, config.n_lambda, config.lambda_ratio,
                                              derive_seed(seed, cv_stream), boot.solver);
    if (!cv_in && fits)
        *fits += static_cast<long long>(config.cv_folds) * config.n_lambda;

    if (method == CiMethod::debias) {
        const FitResult fit = fit_penalized_glm(X, y, family, PenaltySpec::lasso(cv.best_lambda), boot.solver);
        const Matrix Xw = weighted_design(X, fit, family, true);
        PrecisionEstimate theta;
        if (config.theta == ThetaMethod::direct) {
            theta = direct_theta(Xw);
        } else {
            const double lam = select_nodewise_lambda(Xw, 1, seed);
            theta = nodewise_theta(Xw, Vector::Constant(Xw.cols(), lam));
        }
        DebiasGlmOptions opt;
        opt.level = boot.level;
        opt.variance = config.variance;
        opt.term_names = boot.term_names;
        if (fits)
            *fits += 1;
        return debias_glm(fit, X, y, family, theta, opt).intervals;
    }

    BootstrapResult res;
    switch (method) {
    case CiMethod::plr: res = plr_glm(X, y, family, boot, cv); break;
    case CiMethod::paired_boot: res = paired_bootstrap_glm(X, y, family, boot, cv); break;
    case CiMethod::resid_boot:
        res = family.kind == FamilyKind::gaussian ? residual_bootstrap_lm(X, y, boot, cv)
                                                  : residual_bootstrap_glm(X, y, family, boot, cv);
        break;
    default: break;
    }
    if (fits)
        *fits += res.total_fits;
    if (clamp_fraction)
        *clamp_fraction = res.clamp_fraction;
    return res.intervals;
}

CoverageReport run_coverage_experiment(const SimScenario& scenario, CiMethod method, const ExperimentConfig& config)
{
    return run_experiment(scenario, {method}, config).front();
}

std::vector<CoverageReport> width_comparison(const SimScenario& scenario, const std::vector<CiMethod>& methods,
                                             const ExperimentConfig& config)
{
    if (methods.size() < 2)
        throw Error(ErrorKind::config, "width comparison needs at least two methods");
    return run_experiment(scenario, methods, config);
}

CoverageReport recount_from_log(const std::filesystem::path& log, const SimScenario& scenario)
{
    if (!std::filesystem::exists(log))
        throw Error(ErrorKind::io, "no log at " + log.string());
    const std::string stem = log.stem().string();
    CiMethod method = CiMethod::stub;
    const auto dot = stem.rfind('.');
    if (dot != std::string::npos && stem.substr(dot + 1) != "stub")
        method = parse_ci_method(stem.substr(dot + 1));
    RepMap reps = read_log(log, scenario.p, nullptr);
    for (auto it = reps.begin(); it != reps.end();)
        it = it->first >= scenario.R ? reps.erase(it) : std::next(it);
    return summarize(scenario, method, reps);
}

std::filesystem::path log_path(const std::filesystem::path& dir, const SimScenario& scenario, CiMethod method)
{
    return dir / (scenario.name + "-" + scenario.hash() + "." + to_string(method) + ".csv");
}

void write_coverage_csv(std::ostream& out, const std::vector<CoverageReport>& reports)
{
    out << "coefficient_index,true_beta,method,ci_rate,mean_width\n";
    for (const auto& rep : reports)
        for (const auto& row : rep.rows)
            out << row.index << ',' << number(row.true_beta) << ',' << to_string(rep.method) << ','
                << number(row.ci_rate) << ',' << number(row.mean_width) << '\n';
}

} // namespace selinf
