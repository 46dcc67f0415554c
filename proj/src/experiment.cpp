// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "airfl/experiment.hpp"

namespace airfl::exp {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// seed mixing for the estimate draw and the per-round channels
constexpr std::uint64_t kEstimateSalt = 0x9e3779b97f4a7c15ULL;

double linear_to_db(double x) { return 10.0 * std::log10(x); }

template <class T> T get(const json &doc, const char *key) {
    try {
        return doc.at(key).get<T>();
    } catch (const json::exception &e) {
        throw InvalidInput(std::string("config key '") + key + "': " + e.what());
    }
}

channel::Point get_point(const json &doc, const char *key) {
    const auto v = get<std::vector<double>>(doc, key);
    if (v.size() != 3) throw InvalidInput(std::string("config key '") + key + "' needs three coordinates");
    return {v[0], v[1], v[2]};
}

const std::set<std::string> &known_keys() {
    static const std::set<std::string> keys{
        "profile", "K", "Nt", "Nr", "M", "p_max_dbm", "gamma_min_db", "p_gap_perfect_dbm", "p_gap_imperfect_dbm",
        "sigma2_n_dbm", "alpha", "T0", "T1", "T2", "T3", "eps0", "eps1", "eps2", "eps3", "feas_tol", "opt_tol",
        "max_iter", "bs_position", "ris_position", "device_positions", "c0_dbm", "nu_db", "nu_dr", "nu_rb",
        "rician_db", "rician_dr", "rician_rb", "fading", "regime", "iota", "seeds", "sweep", "workers", "rounds", "redraws",
        "flsim_mode", "verify_draws", "verify_instances"};
    return keys;
}

std::string join_number(double x, SweepAxis axis) {
    if (axis == SweepAxis::receive_antennas || axis == SweepAxis::ris_elements) return std::to_string(long(x));
    return format_number(x);
}

} // namespace

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string to_string(SweepAxis a) {
    switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::receive_antennas: return "receive-antennas";
    case SweepAxis::nmse: return "nmse";
    case SweepAxis::gamma_min: return "gamma-min";
    case SweepAxis::ris_elements: return "ris-elements";
    }
    return "none";
}

SweepAxis parse_axis(const std::string &s) {
    for (auto a : {SweepAxis::none, SweepAxis::receive_antennas, SweepAxis::nmse, SweepAxis::gamma_min,
                   SweepAxis::ris_elements})
        if (to_string(a) == s) return a;
    throw InvalidInput("unknown sweep axis '" + s + "'");
}

// ---- config ----

ExperimentConfig parse_config(const json &doc, const std::string &profile_arg) {
    if (!doc.is_object()) throw InvalidInput("config must be a JSON object");
    for (const auto &[key, _] : doc.items())
        if (!known_keys().count(key)) throw InvalidInput("unknown config key '" + key + "'");

    ExperimentConfig c;
    c.raw = doc;
    const std::string profile = doc.contains("profile") ? get<std::string>(doc, "profile") : profile_arg;
    if (profile == "desk")
        c.system = SystemConfig::desk();
    else if (profile == "table2")
        c.system = SystemConfig::table2();
    else
        throw InvalidInput("unknown profile '" + profile + "'");

    auto &s = c.system;
    auto size_key = [&](const char *k, std::size_t &dst) {
        if (!doc.contains(k)) return;
        const long v = get<long>(doc, k);
        if (v < 0) throw InvalidInput(std::string("config key '") + k + "' must be non-negative");
        dst = std::size_t(v);
    };
    size_key("K", s.K);
    size_key("Nt", s.Nt);
    size_key("Nr", s.Nr);
    size_key("M", s.M);
    auto db_key = [&](const char *k, double &dst) {
        if (doc.contains(k)) dst = db_to_linear(get<double>(doc, k));
    };
    db_key("p_max_dbm", s.p_max);
    db_key("gamma_min_db", s.gamma_min);
    db_key("p_gap_perfect_dbm", s.p_gap_perfect);
    db_key("p_gap_imperfect_dbm", s.p_gap_imperfect);
    db_key("sigma2_n_dbm", s.sigma2_n);
    auto num_key = [&](const char *k, auto &dst) {
        if (doc.contains(k)) dst = get<std::decay_t<decltype(dst)>>(doc, k);
    };
    num_key("alpha", s.alpha);
    num_key("T0", s.T0);
    num_key("T1", s.T1);
    num_key("T2", s.T2);
    num_key("T3", s.T3);
    num_key("eps0", s.eps0);
    num_key("eps1", s.eps1);
    num_key("eps2", s.eps2);
    num_key("eps3", s.eps3);
    num_key("feas_tol", s.feas_tol);
    num_key("opt_tol", s.opt_tol);
    num_key("max_iter", s.max_iter);

    auto &g = c.geometry;
    if (doc.contains("bs_position")) g.bs_position = get_point(doc, "bs_position");
    if (doc.contains("ris_position")) g.ris_position = get_point(doc, "ris_position");
    if (doc.contains("device_positions")) {
        const auto &arr = doc.at("device_positions");
        if (!arr.is_array()) throw InvalidInput("config key 'device_positions' must be an array");
        for (const auto &p : arr) {
            const auto v = p.get<std::vector<double>>();
            if (v.size() != 3) throw InvalidInput("device position needs three coordinates");
            g.device_positions.push_back({v[0], v[1], v[2]});
        }
        c.fixed_positions = true;
    }
    db_key("c0_dbm", g.c0);
    num_key("nu_db", g.nu_db);
    num_key("nu_dr", g.nu_dr);
    num_key("nu_rb", g.nu_rb);
    num_key("rician_db", g.rician_db);
    num_key("rician_dr", g.rician_dr);
    num_key("rician_rb", g.rician_rb);
    if (doc.contains("fading")) {
        const auto f = get<std::string>(doc, "fading");
        if (f == "rayleigh") {
            c.rayleigh = true;
            g.rician_db = 0.0;
        } else if (f != "rician") {
            throw InvalidInput("fading must be 'rician' or 'rayleigh'");
        }
    }
    if (doc.contains("regime")) {
        const auto r = get<std::string>(doc, "regime");
        if (r == "perfect")
            c.regime = Regime::perfect;
        else if (r == "imperfect")
            c.regime = Regime::imperfect;
        else
            throw InvalidInput("regime must be 'perfect' or 'imperfect'");
    }
    num_key("iota", c.iota);
    if (doc.contains("seeds")) c.seeds = get<std::vector<std::uint64_t>>(doc, "seeds");
    if (doc.contains("sweep")) {
        const auto &sw = doc.at("sweep");
        if (!sw.is_object()) throw InvalidInput("config key 'sweep' must be an object");
        for (const auto &[key, _] : sw.items())
            if (key != "axis" && key != "values") throw InvalidInput("unknown sweep key '" + key + "'");
        if (sw.contains("axis")) c.axis = parse_axis(get<std::string>(sw, "axis"));
        if (sw.contains("values")) c.grid = get<std::vector<double>>(sw, "values");
    }
    num_key("workers", c.workers);
    num_key("rounds", c.rounds);
    num_key("redraws", c.redraws);
    num_key("flsim_mode", c.flsim_mode);
    num_key("verify_draws", c.verify_draws);
    num_key("verify_instances", c.verify_instances);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string &path, const std::string &profile) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open config '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        throw InvalidInput("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(doc, profile);
}

void ExperimentConfig::validate() const {
    system.validate();
    if (fixed_positions) geometry.validate(system.K);
    if (seeds.empty()) throw InvalidInput("seed list is empty");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
        throw InvalidInput("seeds must be distinct");
    if (!(iota >= 0.0 && std::isfinite(iota))) throw InvalidInput("iota must be finite and non-negative");
    if (axis != SweepAxis::none) {
        if (grid.empty()) throw InvalidInput("sweep grid is empty");
        if (!std::is_sorted(grid.begin(), grid.end()) ||
            std::adjacent_find(grid.begin(), grid.end()) != grid.end())
            throw InvalidInput("sweep grid must be strictly ascending");
        for (double x : grid) {
            if (!std::isfinite(x)) throw InvalidInput("sweep grid values must be finite");
            if ((axis == SweepAxis::receive_antennas || axis == SweepAxis::ris_elements) &&
                (x < 0 || x != std::floor(x)))
                throw InvalidInput("antenna and element counts must be non-negative integers");
            if (axis == SweepAxis::receive_antennas && x < 1) throw InvalidInput("Nr must be >= 1");
            if (axis == SweepAxis::nmse && x < 0) throw InvalidInput("NMSE must be non-negative");
        }
    }
    if (workers < 1) throw InvalidInput("workers must be >= 1");
    if (rounds < 0) throw InvalidInput("rounds must be non-negative");
    if (redraws < 0) throw InvalidInput("redraws must be non-negative");
    if (flsim_mode != "ideal" && flsim_mode != "optimized" && flsim_mode != "both")
        throw InvalidInput("flsim_mode must be 'ideal', 'optimized' or 'both'");
    if (verify_draws < 2 || verify_instances < 1) throw InvalidInput("verify sizes too small");
}

json ExperimentConfig::echo() const {
    const auto &s = system;
    const auto &g = geometry;
    json lin = {{"K", s.K},
                {"Nt", s.Nt},
                {"Nr", s.Nr},
                {"M", s.M},
                {"p_max", s.p_max},
                {"gamma_min", s.gamma_min},
                {"p_gap_perfect", s.p_gap_perfect},
                {"p_gap_imperfect", s.p_gap_imperfect},
                {"sigma2_n", s.sigma2_n},
                {"alpha", s.alpha},
                {"T0", s.T0},
                {"T1", s.T1},
                {"T2", s.T2},
                {"T3", s.T3},
                {"eps0", s.eps0},
                {"eps1", s.eps1},
                {"eps2", s.eps2},
                {"eps3", s.eps3},
                {"feas_tol", s.feas_tol},
                {"opt_tol", s.opt_tol},
                {"max_iter", s.max_iter},
                {"bs_position", g.bs_position},
                {"ris_position", g.ris_position},
                {"c0", g.c0},
                {"nu_db", g.nu_db},
                {"nu_dr", g.nu_dr},
                {"nu_rb", g.nu_rb},
                {"rician_db", g.rician_db},
                {"rician_dr", g.rician_dr},
                {"rician_rb", g.rician_rb},
                {"fading", rayleigh ? "rayleigh" : "rician"},
                {"regime", to_string(regime)},
                {"iota", iota},
                {"seeds", seeds},
                {"sweep", {{"axis", to_string(axis)}, {"values", grid}}},
                {"rounds", rounds},
                {"redraws", redraws},
                {"flsim_mode", flsim_mode},
                {"verify_draws", verify_draws},
                {"verify_instances", verify_instances}};
    if (fixed_positions) lin["device_positions"] = g.device_positions;
    json db = {{"p_max_dbm", linear_to_db(s.p_max)},
               {"gamma_min_db", linear_to_db(s.gamma_min)},
               {"p_gap_perfect_dbm", linear_to_db(s.p_gap_perfect)},
               {"p_gap_imperfect_dbm", linear_to_db(s.p_gap_imperfect)},
               {"sigma2_n_dbm", linear_to_db(s.sigma2_n)},
               {"c0_dbm", linear_to_db(g.c0)}};
    // workers is left out on purpose: it must not change the output bytes
    return {{"raw", raw}, {"db", db}, {"linear", lin}};
}

ExperimentConfig at_grid_point(const ExperimentConfig &cfg, double value) {
    ExperimentConfig c = cfg;
    switch (cfg.axis) {
    case SweepAxis::none: break;
    case SweepAxis::receive_antennas: c.system.Nr = std::size_t(value); break;
    case SweepAxis::nmse: c.iota = value; break;
    case SweepAxis::gamma_min: c.system.gamma_min = db_to_linear(value); break;
    case SweepAxis::ris_elements: c.system.M = std::size_t(value); break;
    }
    return c;
}

// ---- single runs ----

namespace {

struct Instance {
    channel::SystemGeometry geometry;
    channel::ChannelRealization truth;
    channel::ChannelEstimate estimate; // only for the imperfect regime
    opt::Csi csi;
};

Instance make_instance(const ExperimentConfig &c, std::uint64_t seed, std::uint64_t channel_seed) {
    Instance in;
    in.geometry = c.geometry;
    if (!c.fixed_positions) in.geometry.device_positions = channel::sample_device_positions(c.system.K, seed);
    in.truth = channel::sample_channels(in.geometry, c.system, channel_seed);
    if (c.regime == Regime::imperfect) {
        const auto model = channel::calibrate_error_model(in.truth, c.iota);
        in.estimate = channel::sample_estimate(in.truth, model, channel_seed ^ kEstimateSalt);
        in.csi = opt::Csi::imperfect(in.estimate);
    } else {
        in.csi = opt::Csi::perfect(in.truth);
    }
    return in;
}

json report_json(const convex::SolverReport &r) {
    return {{"status", convex::to_string(r.status)},
            {"objective", r.objective},
            {"max_violation", r.max_violation},
            {"kkt_residual", r.kkt_residual},
            {"method", r.method},
            {"iterations", r.iterations}};
}

json trace_json(const opt::AoTrace &tr) {
    json its = json::array();
    for (const auto &it : tr.iterations) {
        json a = json::array(), f = json::array(), v = json::array();
        for (const auto &r : it.a_reports) a.push_back(report_json(r));
        for (const auto &r : it.f_reports) f.push_back(report_json(r));
        for (const auto &r : it.v_reports) v.push_back(report_json(r));
        its.push_back({{"objective", it.objective},
                       {"min_sinr", it.min_sinr},
                       {"min_gap", it.min_gap},
                       {"a_accepted", it.a_accepted},
                       {"rank_residuals", it.rank_residuals},
                       {"a_reports", a},
                       {"f_reports", f},
                       {"v_reports", v},
                       {"note", it.note},
                       {"failure", it.failure}});
    }
    return {{"initial_objective", tr.initial_objective},
            {"converged", tr.converged},
            {"failure", tr.failure},
            {"iterations", its}};
}

json state_json(const BeamformerState &s) {
    auto cvec = [](const CVec &x) {
        json out = json::array();
        for (Eigen::Index i = 0; i < x.size(); ++i) out.push_back({x[i].real(), x[i].imag()});
        return out;
    };
    json a = json::array();
    for (const auto &ak : s.a) a.push_back(cvec(ak));
    return {{"b", cvec(s.b)}, {"f", cvec(s.f)}, {"a", a}, {"v", std::vector<double>(s.v.data(), s.v.data() + s.v.size())}};
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

// Optimizes one instance. Infeasible starts propagate as InfeasibleInstance.
opt::AoResult optimize(const opt::Csi &csi, const SystemConfig &cfg, std::uint64_t seed) {
    const auto init = opt::initialize_feasible(csi, cfg, seed);
    return opt::run_algorithm(init, csi, cfg);
}

} // namespace

SingleRun run_single(const ExperimentConfig &cfg0, std::uint64_t seed, double sweep_value) {
    const ExperimentConfig cfg = at_grid_point(cfg0, sweep_value);
    SingleRun out;
    auto &row = out.row;
    row.seed = seed;
    row.sweep_value = sweep_value;
    row.regime = cfg.regime;
    row.iota = cfg.iota;
    row.mse = row.initial_mse = row.min_sinr = row.min_gap = row.nonrobust_min_sinr = kNaN;
    out.trace = {{"seed", seed}, {"sweep_value", sweep_value}};

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const Instance in = make_instance(cfg, seed, seed);
        const auto res = optimize(in.csi, cfg.system, seed);
        const auto au = opt::audit(res.state, in.csi, cfg.system, cfg.system.feas_tol);
        row.mse = opt::objective(res.state, in.csi, cfg.system);
        row.initial_mse = res.trace.initial_objective;
        row.min_sinr = au.min_sinr;
        row.min_gap = au.min_gap;
        row.iterations = int(res.trace.iterations.size());
        row.converged = res.trace.converged;
        row.status = "ok";
        if (!res.trace.failure.empty()) row.detail = res.trace.failure;
        else if (!au.feasible()) row.detail = "final audit outside tolerance";
        out.state = res.state;
        out.trace["trace"] = trace_json(res.trace);
        out.trace["state"] = state_json(res.state);
        out.trace["sinr"] = au.sinr;
        out.trace["gaps"] = au.gaps;
        out.trace["order"] = au.order;

        if (cfg.regime == Regime::imperfect) {
            // The perfect-CSI design fed the estimate as if it were the truth, judged by the imperfect metric.
            try {
                const auto naive_csi = opt::Csi::perfect(in.estimate.est);
                const auto naive = optimize(naive_csi, cfg.system, seed);
                const auto au2 = opt::audit(naive.state, in.csi, cfg.system, cfg.system.feas_tol);
                row.nonrobust_min_sinr = au2.min_sinr;
                out.trace["nonrobust"] = {{"min_sinr", au2.min_sinr},
                                          {"sinr", au2.sinr},
                                          {"objective", opt::objective(naive.state, in.csi, cfg.system)}};
            } catch (const InfeasibleInstance &e) {
                out.trace["nonrobust"] = {{"status", "infeasible"}, {"detail", e.what()}};
            }
        }
    } catch (const InfeasibleInstance &e) {
        row.status = "infeasible";
        row.detail = e.family + ": " + e.what();
        out.trace["status"] = "infeasible";
    } catch (const std::exception &e) {
        row.status = "error";
        row.detail = e.what();
        out.trace["status"] = "error";
    }
    row.wall_ms = elapsed_ms(t0);
    if (row.status != "ok") row.mse = row.initial_mse = row.min_sinr = row.min_gap = row.nonrobust_min_sinr = kNaN;
    out.trace["detail"] = row.detail;
    return out;
}

namespace {

// Runs jobs on up to `workers` threads; results land in job order.
template <class Fn> void parallel_for(std::size_t n, int workers, Fn &&fn) {
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    };
    const std::size_t nt = std::min<std::size_t>(std::size_t(std::max(workers, 1)), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < nt; ++t) pool.emplace_back(loop);
    loop();
    for (auto &t : pool) t.join();
}

} // namespace

std::vector<ResultRow> summarize(const std::vector<ResultRow> &rows) {
    std::map<double, std::vector<const ResultRow *>> by_point;
    std::map<double, const ResultRow *> any;
    for (const auto &r : rows) {
        any.emplace(r.sweep_value, &r);
        auto &slot = by_point[r.sweep_value]; // every grid point gets a row, even with no ok runs
        if (r.status == "ok") slot.push_back(&r);
    }
    std::vector<ResultRow> out;
    for (const auto &[value, rs] : by_point) {
        ResultRow s;
        s.status = "summary";
        s.sweep_value = value;
        s.regime = any[value]->regime;
        s.iota = any[value]->iota;
        s.count = int(rs.size());
        if (rs.empty()) {
            s.mse = s.initial_mse = s.min_sinr = s.min_gap = s.nonrobust_min_sinr = kNaN;
            s.detail = "no successful runs";
            out.push_back(s);
            continue;
        }
        double n = double(rs.size()), mse = 0, init = 0, sinr = 0, gap = 0, it = 0, wall = 0, nr = 0;
        int nr_count = 0;
        bool conv = true;
        for (const auto *r : rs) {
            mse += r->mse;
            init += r->initial_mse;
            sinr += r->min_sinr;
            gap += r->min_gap;
            it += r->iterations;
            wall += r->wall_ms;
            conv = conv && r->converged;
            if (!std::isnan(r->nonrobust_min_sinr)) {
                nr += r->nonrobust_min_sinr;
                ++nr_count;
            }
        }
        s.mse = mse / n;
        s.initial_mse = init / n;
        s.min_sinr = sinr / n;
        s.min_gap = gap / n;
        s.iterations = int(std::lround(it / n));
        s.wall_ms = wall / n;
        s.converged = conv;
        s.nonrobust_min_sinr = nr_count ? nr / nr_count : kNaN;
        s.detail = nr_count ? "nonrobust averaged over " + std::to_string(nr_count) + " runs" : "";
        out.push_back(s);
    }
    return out;
}

std::vector<ResultRow> run_rows(const ExperimentConfig &cfg, bool sweep, json *traces) {
    const std::vector<double> points = sweep ? cfg.grid : std::vector<double>{0.0};
    std::vector<std::pair<double, std::uint64_t>> jobs;
    for (double p : points)
        for (auto s : cfg.seeds) jobs.push_back({p, s});
    std::sort(jobs.begin(), jobs.end());
    std::vector<SingleRun> runs(jobs.size());
    ExperimentConfig c = cfg;
    if (!sweep) c.axis = SweepAxis::none;
    parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) { runs[i] = run_single(c, jobs[i].second, jobs[i].first); });
    std::vector<ResultRow> rows;
    for (auto &r : runs) {
        rows.push_back(r.row);
        if (traces) traces->push_back(std::move(r.trace));
    }
    return rows;
}

const std::vector<std::string> &result_columns() {
    static const std::vector<std::string> cols{"seed",       "sweep_axis", "sweep_value", "status",   "regime",
                                               "iota",       "mse",        "initial_mse", "min_sinr", "min_gap",
                                               "iterations", "converged",  "nonrobust_min_sinr", "count", "detail"};
    return cols;
}

namespace {

std::string csv_escape(const std::string &s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

} // namespace

std::vector<std::string> format_row(const ResultRow &r, SweepAxis axis) {
    return {r.status == "summary" ? "mean" : std::to_string(r.seed),
            to_string(axis),
            join_number(r.sweep_value, axis),
            r.status,
            to_string(r.regime),
            format_number(r.iota),
            format_number(r.mse),
            format_number(r.initial_mse),
            format_number(r.min_sinr),
            format_number(r.min_gap),
            std::to_string(r.iterations),
            r.converged ? "1" : "0",
            format_number(r.nonrobust_min_sinr),
            std::to_string(r.count),
            r.detail};
}

namespace {

Report rows_report(const ExperimentConfig &cfg, const std::string &command, bool sweep) {
    Report rep;
    json traces = json::array();
    auto rows = run_rows(cfg, sweep, &traces);
    const SweepAxis axis = sweep ? cfg.axis : SweepAxis::none;
    rep.columns = result_columns();
    for (const auto &r : rows) {
        rep.rows.push_back(format_row(r, axis));
        rep.timing.push_back({std::to_string(r.seed), join_number(r.sweep_value, axis), format_number(r.wall_ms)});
        if (r.status == "error") rep.exit_code = 1;
    }
    if (sweep)
        for (const auto &s : summarize(rows)) rep.rows.push_back(format_row(s, axis));
    rep.sidecar = {{"command", command}, {"columns", rep.columns}, {"config", cfg.echo()}, {"runs", traces}};
    return rep;
}

} // namespace

Report cmd_optimize(const ExperimentConfig &cfg) { return rows_report(cfg, "optimize", false); }

Report cmd_sweep(const ExperimentConfig &cfg) {
    if (cfg.axis == SweepAxis::none) throw InvalidInput("sweep needs a sweep axis");
    return rows_report(cfg, "sweep", true);
}

Report cmd_verify(const ExperimentConfig &cfg, const oracle::JFunction &interference) {
    oracle::SuiteOptions o;
    o.cfg = cfg.system;
    o.seed = cfg.seeds.front();
    o.draws = cfg.verify_draws;
    o.instances = cfg.verify_instances;
    o.hessian_instances = cfg.verify_instances;
    // an explicit iota narrows the Monte-Carlo families to that level
    if (cfg.raw.contains("iota")) o.iotas = {cfg.iota};
    o.interference = interference;
    const auto checks = oracle::run_suite(o);

    Report rep;
    rep.columns = {"check", "pass", "measured", "threshold", "detail"};
    json arr = json::array();
    for (const auto &c : checks) {
        rep.rows.push_back({c.name, c.pass ? "PASS" : "FAIL", format_number(c.measured), format_number(c.threshold),
                            c.detail});
        arr.push_back({{"name", c.name},
                       {"pass", c.pass},
                       {"measured", c.measured},
                       {"threshold", c.threshold},
                       {"detail", c.detail}});
        if (!c.pass) rep.exit_code = 1;
    }
    rep.sidecar = {{"command", "verify"}, {"columns", rep.columns}, {"config", cfg.echo()}, {"checks", arr}};
    return rep;
}

Report cmd_flsim(const ExperimentConfig &cfg) {
    std::vector<std::string> modes;
    if (cfg.flsim_mode != "optimized") modes.push_back("ideal");
    if (cfg.flsim_mode != "ideal") modes.push_back("optimized");

    struct Job {
        std::uint64_t seed;
        std::string mode;
    };
    std::vector<Job> jobs;
    for (auto s : cfg.seeds)
        for (const auto &m : modes) jobs.push_back({s, m});
    std::sort(jobs.begin(), jobs.end(), [](const Job &x, const Job &y) { return std::tie(x.seed, x.mode) < std::tie(y.seed, y.mode); });

    std::vector<sim::FederatedTrace> traces(jobs.size());
    std::vector<std::string> errors(jobs.size());
    std::vector<json> round_info(jobs.size(), json::array());
    parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
        const auto &job = jobs[j];
        sim::LinkProvider links;
        if (job.mode == "optimized") {
            links = [&, j](int t) -> std::optional<sim::RoundLink> {
                // fresh channels every round; an infeasible draw may be redrawn up to cfg.redraws times
                const std::uint64_t base = job.seed * 1000003ULL + std::uint64_t(t) + 1;
                std::string last;
                for (int r = 0; r <= cfg.redraws; ++r) {
                    const std::uint64_t ch_seed = r == 0 ? base : base ^ (0xd1b54a32d192ed03ULL * std::uint64_t(r));
                    const Instance in = make_instance(cfg, job.seed, ch_seed);
                    sim::RoundLink link;
                    link.truth = in.truth;
                    link.options.gamma_min = cfg.system.gamma_min;
                    if (cfg.regime == Regime::imperfect) link.options.decoder = in.estimate.est;
                    try {
                        link.state = optimize(in.csi, cfg.system, ch_seed).state;
                        round_info[j].push_back({{"round", t}, {"status", "ok"}, {"redraws", r}});
                        return link;
                    } catch (const InfeasibleInstance &e) {
                        last = e.what();
                        if (r < cfg.redraws) continue;
                        link.state = opt::starting_point(in.csi, cfg.system, ch_seed);
                        link.flagged = true;
                        round_info[j].push_back({{"round", t}, {"status", "fallback"}, {"redraws", r}, {"detail", last}});
                        return link;
                    }
                }
                throw std::logic_error("redraw loop fell through");
            };
        }
        try {
            traces[j] = sim::run_federated(job.seed, cfg.rounds, cfg.system.K, links, cfg.system.sigma2_n);
        } catch (const std::exception &e) {
            errors[j] = e.what();
        }
    });

    Report rep;
    rep.columns = {"seed", "mode", "round", "loss", "aggregation_mse", "sic_successes", "flagged", "centralized_loss"};
    json runs = json::array();
    for (std::size_t j = 0; j < jobs.size(); ++j) {
        const auto &tr = traces[j];
        if (!errors[j].empty()) {
            rep.exit_code = 1;
            runs.push_back({{"seed", jobs[j].seed}, {"mode", jobs[j].mode}, {"error", errors[j]}});
            continue;
        }
        for (std::size_t t = 0; t < tr.loss.size(); ++t)
            rep.rows.push_back({std::to_string(jobs[j].seed), jobs[j].mode, std::to_string(t + 1),
                                format_number(tr.loss[t]), format_number(tr.aggregation_mse[t]),
                                std::to_string(tr.sic_successes[t]), tr.flagged[t] ? "1" : "0",
                                format_number(tr.centralized_loss)});
        runs.push_back({{"seed", jobs[j].seed},
                        {"mode", jobs[j].mode},
                        {"initial_loss", tr.initial_loss},
                        {"centralized_loss", tr.centralized_loss},
                        {"final_loss", tr.loss.empty() ? tr.initial_loss : tr.loss.back()},
                        {"rounds", round_info[j]}});
    }
    rep.sidecar = {{"command", "flsim"}, {"columns", rep.columns}, {"config", cfg.echo()}, {"runs", runs}};
    return rep;
}

// ---- output ----

void write_report(const Report &report, const std::string &path) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    auto write_csv = [](const fs::path &file, const std::vector<std::string> &header,
                        const std::vector<std::vector<std::string>> &rows) {
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("cannot write '" + file.string() + "'");
        auto line = [&](const std::vector<std::string> &cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << csv_escape(cells[i]);
            out << '\n';
        };
        line(header);
        for (const auto &r : rows) line(r);
    };
    write_csv(p, report.columns, report.rows);
    fs::path side = p;
    side.replace_extension(".json");
    if (side == p) side += ".json";
    {
        std::ofstream out(side, std::ios::binary | std::ios::trunc);
        if (!out) throw InvalidInput("cannot write '" + side.string() + "'");
        out << report.sidecar.dump(2) << '\n';
    }
    if (!report.timing.empty()) {
        fs::path timing = p;
        timing.replace_extension(".timing.csv");
        write_csv(timing, {"seed", "sweep_value", "wall_ms"}, report.timing);
    }
}

} // namespace airfl::exp
