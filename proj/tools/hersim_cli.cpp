#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hersim/sweeps.hpp"

using namespace hersim;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Common
{
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    unsigned workers = 0;
    bool resume = false;
    bool quiet = false;
};

ScenarioConfig resolve(const Common& c)
{
    ScenarioConfig cfg = c.config_path.empty() ? ScenarioConfig{} : load_config(c.config_path);
    for (const auto& s : c.overrides) cfg = apply_override(cfg, s);
    if (!c.out_dir.empty()) cfg.output.directory = c.out_dir;
    if (c.workers) cfg.output.workers = c.workers;
    validate(cfg);
    return cfg;
}

json sidecar(const ScenarioConfig& cfg, const std::string& kind, std::chrono::steady_clock::time_point t0)
{
    json j;
    j["provenance"] = {{"schema_version", kSchemaVersion},
                       {"kind", kind},
                       {"config_hash", config_hash(cfg)},
                       {"tool_version", kToolVersion},
                       {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    j["config"] = cfg;
    return j;
}

void report(const Common& c, const std::vector<fs::path>& files)
{
    if (c.quiet) return;
    for (const auto& f : files) std::cout << f.string() << "\n";
}

SweepOptions sweep_options(const Common& c, const ScenarioConfig& cfg, const std::string& stem)
{
    SweepOptions o;
    o.workers = cfg.output.workers;
    if (c.resume) o.checkpoint = fs::path(cfg.output.directory) / (stem + ".checkpoint");
    if (!c.quiet)
        o.progress = [](std::size_t done, std::size_t total) {
            std::cerr << "\r" << done << "/" << total << std::flush;
            if (done == total) std::cerr << "\n";
        };
    return o;
}

void finish_sweep(const Common& c, const SweepResult& r, const ScenarioConfig& cfg, const std::string& stem)
{
    const fs::path dir = cfg.output.directory;
    auto files = write_sweep(r, cfg, dir, stem);
    if (c.resume) fs::remove(dir / (stem + ".checkpoint"));
    report(c, files);
    if (r.failed_points() && !c.quiet)
        std::cerr << "warning: " << r.failed_points() << " of " << r.points() << " points failed (NaN in output)\n";
    if (!c.quiet && !r.summary.empty()) std::cerr << r.summary.dump() << "\n";
}

int cmd_phasematch(const Common& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = resolve(c);
    const Scenario sc(cfg);
    const auto map = build_map(sc.phasematch_config(), sc.length(), default_worker_count());
    const fs::path dir = cfg.output.directory;
    write_file(dir / "phasematch.csv", phasematch_csv(map));
    write_file(dir / "phasematch_contours.csv", contours_csv(map));
    auto side = sidecar(cfg, "phasematch_map", t0);
    side["degenerate_contour"] = map.degenerate_contour;
    side["files"] = {"phasematch.csv", "phasematch_contours.csv"};
    write_json(dir / "phasematch.json", side);
    report(c, {dir / "phasematch.csv", dir / "phasematch_contours.csv", dir / "phasematch.json"});
    return 0;
}

int cmd_jsa(const Common& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = resolve(c);
    const Scenario sc(cfg);
    const auto f = sc.jsa(sc.length());
    const fs::path dir = cfg.output.directory;
    write_file(dir / "jsi.csv", jsi_csv(f));
    auto side = sidecar(cfg, "jsa", t0);
    side["files"] = {"jsi.csv"};
    write_json(dir / "jsi.json", side);
    report(c, {dir / "jsi.csv", dir / "jsi.json"});
    return 0;
}

int cmd_schmidt(const Common& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = resolve(c);
    const Scenario sc(cfg);
    const auto s = schmidt_decompose(sc.jsa(sc.length()));
    json j = schmidt_json(s);
    j["provenance"] = sidecar(cfg, "schmidt", t0)["provenance"];
    const fs::path dir = cfg.output.directory;
    write_json(dir / "schmidt.json", j);
    report(c, {dir / "schmidt.json"});
    return 0;
}

int cmd_herald(const Common& c, double alpha0)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = resolve(c);
    const Scenario sc(cfg);
    const auto f = sc.jsa(sc.length());
    const auto filter = cfg.herald.filter.to_filter();
    const auto g = herald_kernel(f, filter, cfg.herald.to_arm());
    const auto h = heralding_efficiency(f, alpha0, filter, {}, sc.heralding());
    json j = {{"purity", heralded_purity(g)},
              {"herald_weight", g.herald_weight},
              {"p_h_over_eta", h.p_h_over_eta},
              {"alpha0", alpha0},
              {"p_a", h.p_a},
              {"p_ab", h.p_ab}};
    j["provenance"] = sidecar(cfg, "herald", t0)["provenance"];
    const fs::path dir = cfg.output.directory;
    write_json(dir / "herald.json", j);
    report(c, {dir / "herald.json"});
    return 0;
}

int cmd_teleport(const Common& c)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = resolve(c);
    const Scenario sc(cfg);
    const auto her = sc.her(sc.jsa(sc.length()));
    const auto r = run_protocol(her, sc.qubit(), sc.measurement(her), sc.protocol());
    json j = {{"avg_fidelity", r.avg_fidelity},
              {"success_probability", r.success_probability},
              {"rejected_probability", r.rejected_probability},
              {"thetas", r.thetas},
              {"per_theta_fidelity", r.per_theta_fidelity},
              {"per_outcome_fidelity", r.per_outcome_fidelity},
              {"correction_phases", r.correction_phases},
              {"retained_modes", r.retained_modes},
              {"mode_leakage", r.mode_leakage},
              {"truncation_flag", r.truncation_flag}};
    j["provenance"] = sidecar(cfg, "teleport", t0)["provenance"];
    const fs::path dir = cfg.output.directory;
    write_json(dir / "teleport.json", j);
    report(c, {dir / "teleport.json"});
    if (!c.quiet) std::cerr << "avg_fidelity " << format_double(r.avg_fidelity) << "\n";
    return 0;
}

int cmd_fidelity_map(const Common& c)
{
    const auto cfg = resolve(c);
    const std::string stem = "fidelity_map_" + cfg.her.variant;
    finish_sweep(c, fidelity_map(cfg, sweep_options(c, cfg, stem)), cfg, stem);
    return 0;
}

int cmd_length_sweep(Common c, const std::string& qubit_from)
{
    if (!qubit_from.empty()) {
        std::ifstream in(qubit_from);
        require(static_cast<bool>(in), Errc::ConfigError, "cannot open " + qubit_from);
        json side;
        try {
            side = json::parse(in);
        } catch (const json::parse_error& e) {
            fail(Errc::ConfigError, std::string("cannot parse ") + qubit_from + ": " + e.what());
        }
        require(side.contains("summary") && side["summary"].contains("argmax"), Errc::ConfigError,
                qubit_from + " carries no fidelity-map argmax");
        const auto& am = side["summary"]["argmax"];
        c.overrides.push_back("qubit.center_nm=" + format_double(am["qubit_wavelength_nm"].get<double>()));
        c.overrides.push_back("qubit.sigma_trad_s=" + format_double(am["qubit_sigma_Trad_s"].get<double>()));
    }
    const auto cfg = resolve(c);
    finish_sweep(c, length_sweep(cfg, {}, sweep_options(c, cfg, "length_sweep")), cfg, "length_sweep");
    return 0;
}

int cmd_herald_scan(const Common& c)
{
    const auto cfg = resolve(c);
    finish_sweep(c, heralding_scan(cfg, {}, sweep_options(c, cfg, "herald_scan")), cfg, "herald_scan");
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Heralded entangled resource and broadband teleportation simulator"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);
    Common common;
    double alpha0 = 0.0;
    std::string qubit_from;
    bool dump_config = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config_path, "JSON scenario file")->check(CLI::ExistingFile);
        sub->add_option("--set", common.overrides, "override a config key, e.g. --set fiber.length_cm=40")
            ->take_all()
            ->allow_extra_args(false);
        sub->add_option("-o,--out", common.out_dir, "output directory (overrides output.directory)");
        sub->add_option("-j,--workers", common.workers, "worker threads");
        sub->add_flag("-q,--quiet", common.quiet, "suppress progress output");
        sub->add_flag("--dump-config", dump_config, "print the effective config and exit");
    };

    auto* pm = app.add_subcommand("phasematch-map", "phasematching map, GVM angle and zero contour");
    auto* js = app.add_subcommand("jsa", "joint spectral intensity matrix");
    auto* sch = app.add_subcommand("schmidt", "Schmidt decomposition of the joint amplitude");
    auto* her = app.add_subcommand("herald", "heralded-state purity and heralding efficiency");
    auto* hs = app.add_subcommand("herald-scan", "heralding efficiency against the seed amplitude");
    auto* tp = app.add_subcommand("teleport", "one teleportation run at the configured qubit");
    auto* fm = app.add_subcommand("fidelity-map", "average fidelity over the qubit wavelength x bandwidth grid");
    auto* ls = app.add_subcommand("length-sweep", "fidelity, purity and success probability against fibre length");
    for (auto* s : {pm, js, sch, her, hs, tp, fm, ls}) add_common(s);
    her->add_option("--alpha0", alpha0, "seed amplitude for the efficiency")->check(CLI::Range(0.0, 2.0));
    for (auto* s : {hs, fm, ls}) s->add_flag("--resume", common.resume, "reuse completed points from a checkpoint");
    ls->add_option("--qubit-from", qubit_from, "fidelity-map sidecar whose argmax fixes the qubit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (dump_config) {
            std::cout << json(resolve(common)).dump(2) << "\n";
            return 0;
        }
        if (pm->parsed()) return cmd_phasematch(common);
        if (js->parsed()) return cmd_jsa(common);
        if (sch->parsed()) return cmd_schmidt(common);
        if (her->parsed()) return cmd_herald(common, alpha0);
        if (hs->parsed()) return cmd_herald_scan(common);
        if (tp->parsed()) return cmd_teleport(common);
        if (fm->parsed()) return cmd_fidelity_map(common);
        if (ls->parsed()) return cmd_length_sweep(common, qubit_from);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == Errc::ConfigError ? kExitConfig : kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return 0;
}
