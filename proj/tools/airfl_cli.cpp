// SPDX-License-Identifier: Apache-2.0
// airfl: optimize | sweep | verify | flsim
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "airfl/experiment.hpp"

namespace {

std::vector<std::uint64_t> parse_seeds(const std::string &csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    for (std::string tok; std::getline(ss, tok, ',');) {
        if (tok.empty()) continue;
        std::size_t used = 0;
        const auto v = std::stoull(tok, &used);
        if (used != tok.size()) throw airfl::InvalidInput("bad seed '" + tok + "'");
        out.push_back(v);
    }
    if (out.empty()) throw airfl::InvalidInput("--seeds is empty");
    return out;
}

void print(const airfl::exp::Report &rep) {
    for (std::size_t i = 0; i < rep.columns.size(); ++i) std::cout << (i ? "," : "") << rep.columns[i];
    std::cout << '\n';
    for (const auto &row : rep.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) std::cout << (i ? "," : "") << row[i];
        std::cout << '\n';
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"RIS-assisted over-the-air federated aggregation: beamforming optimizer and simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, seeds_csv, profile = "desk";
    int workers = 0;
    auto add_common = [&](CLI::App *sub) {
        sub->add_option("--config", config_path, "JSON config")->check(CLI::ExistingFile);
        sub->add_option("--out", out_path, "CSV output; the JSON sidecar goes next to it");
        sub->add_option("--seeds", seeds_csv, "comma-separated seeds, overrides the config");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--profile", profile, "defaults profile")->check(CLI::IsMember({"desk", "table2"}));
    };
    auto *optimize = app.add_subcommand("optimize", "optimize one instance per seed");
    auto *sweep = app.add_subcommand("sweep", "run a grid of values times seeds, with mean rows");
    auto *verify = app.add_subcommand("verify", "run the closed-form oracle suite");
    auto *flsim = app.add_subcommand("flsim", "federated rounds over optimized aggregation");
    for (auto *s : {optimize, sweep, verify, flsim}) add_common(s);

    CLI11_PARSE(app, argc, argv);

    try {
        if (!out_path.empty() && !config_path.empty() &&
            std::filesystem::weakly_canonical(std::filesystem::path(out_path).replace_extension(".json")) ==
                std::filesystem::weakly_canonical(config_path))
            throw airfl::InvalidInput("--out would overwrite the config with its sidecar");
        auto cfg = config_path.empty() ? airfl::exp::parse_config(nlohmann::json::object(), profile)
                                       : airfl::exp::load_config(config_path, profile);
        if (!seeds_csv.empty()) cfg.seeds = parse_seeds(seeds_csv);
        if (workers > 0) cfg.workers = workers;
        cfg.validate();

        airfl::exp::Report rep;
        if (optimize->parsed())
            rep = airfl::exp::cmd_optimize(cfg);
        else if (sweep->parsed())
            rep = airfl::exp::cmd_sweep(cfg);
        else if (verify->parsed())
            rep = airfl::exp::cmd_verify(cfg);
        else
            rep = airfl::exp::cmd_flsim(cfg);

        if (!out_path.empty()) airfl::exp::write_report(rep, out_path);
        print(rep);
        return rep.exit_code;
    } catch (const airfl::InvalidInput &e) {
        std::cerr << "airfl: invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "airfl: " << e.what() << '\n';
        return 1;
    }
}
