#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hersim/config.hpp"
#include "hersim/dispersion.hpp"
#include "hersim/error.hpp"
#include "hersim/heralding.hpp"
#include "hersim/jsa.hpp"
#include "hersim/numeric.hpp"
#include "hersim/output.hpp"
#include "hersim/phasematching.hpp"
#include "hersim/teleport.hpp"

#ifndef HERSIM_VERSION
#define HERSIM_VERSION "0.0.0"
#endif

namespace hersim {

inline constexpr const char* kToolVersion = HERSIM_VERSION;

// Physics objects derived once from a validated config.
class Scenario
{
public:
    explicit Scenario(ScenarioConfig cfg) : cfg_(std::move(cfg))
    {
        validate(cfg_);
        const auto& f = cfg_.fiber;
        const OperatingPoint op{nm(f.operating_pump_nm), nm(f.operating_idler_nm)};
        const auto range = default_frequency_range();
        if (f.model == "calibrated") {
            model_ = calibrate_operating_point(op, range).model;
        } else if (f.model == "strand") {
            const double radius = f.core_radius_um > 0.0 ? um(f.core_radius_um) : calibrate_strand_radius(op, range);
            model_ = DispersionModel::step_index_strand(radius, range, f.cladding_index);
        } else if (f.model == "polynomial") {
            model_ = DispersionModel::polynomial(wavelength_to_omega(nm(f.reference_nm)), f.beta, range);
        } else {
            model_ = DispersionModel::from_csv(f.table_csv);
        }
        pump_.center_wavelength = nm(cfg_.pump.wavelength_nm);
        pump_.fwhm_wavelength = nm(cfg_.pump.fwhm_nm);
        const double wp = pump_.center_omega();
        idler_omega_ = wavelength_to_omega(op.idler_wavelength);
        signal_omega_ = 2.0 * wp - idler_omega_;
    }

    const ScenarioConfig& config() const { return cfg_; }
    const DispersionModel& model() const { return *model_; }
    const PumpEnvelope& pump() const { return pump_; }
    double length() const { return cm(cfg_.fiber.length_cm); }

    PhasematchConfig phasematch_config() const
    {
        PhasematchConfig pm{*model_};
        pm.phi_nl = cfg_.fiber.phi_nl_per_m;
        const auto& s = cfg_.phasematch;
        pm.pump_wavelength = {nm(s.pump_nm.lo), nm(s.pump_nm.hi), s.pump_nm.count};
        pm.detuning = {-trad_per_s(s.detuning_max_trad_s), trad_per_s(s.detuning_max_trad_s), s.detuning_count};
        return pm;
    }

    JointAmplitude jsa(double length, unsigned workers = default_worker_count()) const
    {
        const PhasematchConfig pm = phasematch_config();
        const auto grid = default_grid(pm, pump_, length, signal_omega_, idler_omega_, cfg_.jsa.grid_points,
                                       cfg_.jsa.half_widths);
        JsaOptions o;
        o.exact_pump_convolution = cfg_.pump.exact_convolution;
        o.pump_quadrature = cfg_.pump.quadrature;
        o.workers = workers;
        return build_jsa(pm, pump_, length, grid, o);
    }

    HerSpec her(const JointAmplitude& f) const
    {
        HerSpec h;
        h.variant = cfg_.her.variant == "pa" ? HerVariant::pa : HerVariant::pd;
        if (cfg_.her.sign == "minus") h.sign = HerSign::minus;
        if (cfg_.her.sign == "plus") h.sign = HerSign::plus;
        h.alpha = cplx(cfg_.her.alpha_re, cfg_.her.alpha_im);
        if (cfg_.her.coherent_envelope)
            h.coherent_envelope = GaussianEnvelope{nm(cfg_.her.coherent_envelope->center_nm),
                                                   trad_per_s(cfg_.her.coherent_envelope->sigma_trad_s)};
        h.herald = herald_kernel(f, cfg_.herald.filter.to_filter(), cfg_.herald.to_arm());
        h.n_schmidt_modes = cfg_.her.schmidt_modes;
        h.prepare();
        return h;
    }

    QubitSpec qubit(double center_nm, double sigma_trad_s) const
    {
        QubitSpec q;
        q.center_wavelength = nm(center_nm);
        q.sigma = trad_per_s(sigma_trad_s);
        return q;
    }

    QubitSpec qubit() const { return qubit(cfg_.qubit.center_nm, cfg_.qubit.sigma_trad_s); }

    MeasurementSpec measurement(const HerSpec& h) const
    {
        auto m = MeasurementSpec::matched(h, cfg_.measurement.tau, cfg_.measurement.detector.to_filter());
        m.accepted_outcomes.clear();
        for (const auto& o : cfg_.measurement.accepted) m.accepted_outcomes.emplace_back(o[0], o[1]);
        return m;
    }

    ProtocolOptions protocol() const
    {
        const auto& p = cfg_.protocol;
        ProtocolOptions o;
        o.theta_samples = p.theta_samples;
        o.theta_i = p.theta_i;
        o.theta_f = p.theta_f;
        o.cutoff = p.cutoff;
        o.check_cutoff = p.check_cutoff;
        o.cutoff_tolerance = p.cutoff_tolerance;
        o.retained_mass = p.retained_mass;
        o.max_modes = p.max_modes;
        o.envelope_half_width = p.envelope_half_width;
        return o;
    }

    HeraldingOptions heralding() const
    {
        HeraldingOptions o;
        o.arm = cfg_.herald.to_arm();
        o.cutoff = cfg_.herald.cutoff;
        return o;
    }

private:
    ScenarioConfig cfg_;
    std::optional<DispersionModel> model_;
    PumpEnvelope pump_;
    double signal_omega_ = 0.0;
    double idler_omega_ = 0.0;
};

struct SweepAxis
{
    std::string name;
    std::vector<double> values;
};

struct PointDiagnostic
{
    bool ok = true;
    bool truncation_flag = false;
    double mode_leakage = 0.0;
    std::size_t retained_modes = 0;
    std::string error;
};

struct SweepResult
{
    std::string kind;
    std::vector<SweepAxis> axes;                // one or two; the first varies slowest
    std::vector<std::string> quantities;
    std::vector<std::vector<double>> values;    // [quantity][point], NaN where the point failed
    std::vector<PointDiagnostic> diagnostics;   // one per point
    nlohmann::json summary = nlohmann::json::object();
    nlohmann::json provenance = nlohmann::json::object();
    std::size_t computed_points = 0;            // points evaluated in this run (the rest came from a checkpoint)

    std::size_t rows() const { return axes.empty() ? 0 : axes[0].values.size(); }
    std::size_t cols() const { return axes.size() < 2 ? 1 : axes[1].values.size(); }
    std::size_t points() const { return rows() * cols(); }

    std::size_t quantity_index(const std::string& q) const
    {
        for (std::size_t i = 0; i < quantities.size(); ++i)
            if (quantities[i] == q) return i;
        fail(Errc::InvalidArgument, "sweep has no quantity '" + q + "'");
    }

    double at(const std::string& q, std::size_t r, std::size_t c = 0) const { return values[quantity_index(q)][r * cols() + c]; }

    Eigen::MatrixXd matrix(const std::string& q) const
    {
        const auto& v = values[quantity_index(q)];
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols()));
        for (std::size_t r = 0; r < rows(); ++r)
            for (std::size_t c = 0; c < cols(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r * cols() + c];
        return m;
    }

    std::size_t failed_points() const
    {
        std::size_t n = 0;
        for (const auto& d : diagnostics) n += d.ok ? 0 : 1;
        return n;
    }
};

struct SweepOptions
{
    unsigned workers = 0;                                // 0: from the config, then hardware concurrency
    std::optional<std::filesystem::path> checkpoint;     // enables resume
    std::function<void(std::size_t done, std::size_t total)> progress;
};

namespace detail {

struct PointRecord
{
    std::vector<double> values;
    PointDiagnostic diag;
};

inline std::string sanitize(std::string s)
{
    for (auto& ch : s)
        if (ch == '\t' || ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

inline std::string hexfloat(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline std::string checkpoint_line(std::size_t i, const PointRecord& p)
{
    std::string s = std::to_string(i) + '\t' + (p.diag.ok ? "1" : "0") + '\t' + (p.diag.truncation_flag ? "1" : "0") + '\t'
        + hexfloat(p.diag.mode_leakage) + '\t' + std::to_string(p.diag.retained_modes);
    for (double v : p.values) s += '\t' + hexfloat(v);
    return s + '\t' + sanitize(p.diag.error) + '\n';
}

inline std::string checkpoint_header(const std::string& hash, std::size_t n, std::size_t nq)
{
    return "# hersim checkpoint " + hash + " " + std::to_string(n) + " " + std::to_string(nq) + "\n";
}

// Loads completed points; lines that do not parse (for example a record cut
// short by an interrupted run) are ignored and recomputed.
inline std::map<std::size_t, PointRecord> read_checkpoint(const std::filesystem::path& path, const std::string& header,
                                                          std::size_t n, std::size_t nq)
{
    std::map<std::size_t, PointRecord> done;
    std::ifstream in(path);
    if (!in) return done;
    std::string line;
    if (!std::getline(in, line) || line + "\n" != header) return done;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string tok; std::getline(ss, tok, '\t');) f.push_back(tok);
        if (!line.empty() && line.back() == '\t') f.emplace_back();
        if (f.size() != 6 + nq) continue;
        char* end = nullptr;
        const auto idx = static_cast<std::size_t>(std::strtoull(f[0].c_str(), &end, 10));
        if (*end != '\0' || idx >= n) continue;
        PointRecord p;
        p.diag.ok = f[1] == "1";
        p.diag.truncation_flag = f[2] == "1";
        p.diag.mode_leakage = std::strtod(f[3].c_str(), &end);
        p.diag.retained_modes = static_cast<std::size_t>(std::strtoull(f[4].c_str(), nullptr, 10));
        bool good = true;
        for (std::size_t q = 0; q < nq; ++q) {
            p.values.push_back(std::strtod(f[5 + q].c_str(), &end));
            good = good && *end == '\0';
        }
        if (!good) continue;
        p.diag.error = f[5 + nq];
        done[idx] = std::move(p);
    }
    return done;
}

// Evaluates `eval(i)` for every missing point. Workers fill index-addressed
// slots; after each batch a single writer appends the batch in index order.
template <typename Eval>
std::vector<PointRecord> run_points(std::size_t n, std::size_t nq, Eval&& eval, const SweepOptions& opts,
                                    unsigned workers, const std::string& hash, std::size_t& computed)
{
    std::vector<PointRecord> out(n);
    std::vector<bool> have(n, false);
    const std::string header = checkpoint_header(hash, n, nq);
    std::ofstream log;
    if (opts.checkpoint) {
        for (auto& [i, p] : read_checkpoint(*opts.checkpoint, header, n, nq)) {
            out[i] = std::move(p);
            have[i] = true;
        }
        // rewrite the kept records so that a torn tail never survives
        if (opts.checkpoint->has_parent_path()) std::filesystem::create_directories(opts.checkpoint->parent_path());
        std::string s = header;
        for (std::size_t i = 0; i < n; ++i)
            if (have[i]) s += checkpoint_line(i, out[i]);
        write_file(*opts.checkpoint, s);
        log.open(*opts.checkpoint, std::ios::app);
        require(static_cast<bool>(log), Errc::IoError, "cannot append to " + opts.checkpoint->string());
    }
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < n; ++i)
        if (!have[i]) todo.push_back(i);
    computed = todo.size();

    auto safe_eval = [&](std::size_t i) {
        PointRecord p;
        try {
            p = eval(i);
        } catch (const std::exception& e) {
            p.values.assign(nq, std::numeric_limits<double>::quiet_NaN());
            p.diag = {};
            p.diag.ok = false;
            p.diag.error = e.what();
        }
        require(p.values.size() == nq, Errc::InvalidArgument, "sweep point returned the wrong number of values");
        return p;
    };

    const std::size_t batch = std::max<std::size_t>(1, 4 * static_cast<std::size_t>(workers));
    std::size_t done = n - todo.size();
    for (std::size_t b = 0; b < todo.size(); b += batch) {
        const std::size_t e = std::min(todo.size(), b + batch);
        parallel_for(e - b, [&](std::size_t k) { out[todo[b + k]] = safe_eval(todo[b + k]); }, workers);
        if (log.is_open()) {
            for (std::size_t k = b; k < e; ++k) log << checkpoint_line(todo[k], out[todo[k]]);
            log.flush();
        }
        done += e - b;
        if (opts.progress) opts.progress(done, n);
    }
    return out;
}

inline unsigned resolve_workers(const SweepOptions& o, const ScenarioConfig& c)
{
    if (o.workers) return o.workers;
    if (c.output.workers) return c.output.workers;
    return default_worker_count();
}

inline void fill(SweepResult& r, std::vector<PointRecord>&& pts)
{
    r.values.assign(r.quantities.size(), std::vector<double>(pts.size()));
    r.diagnostics.resize(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t q = 0; q < r.quantities.size(); ++q) r.values[q][i] = pts[i].values[q];
        r.diagnostics[i] = std::move(pts[i].diag);
    }
}

inline nlohmann::json provenance(const ScenarioConfig& c, const std::string& kind, double wall)
{
    return {{"schema_version", kSchemaVersion}, {"kind", kind},         {"config_hash", config_hash(c)},
            {"tool_version", kToolVersion},     {"wall_time_s", wall}, {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)}};
}

inline PointRecord protocol_point(const ProtocolResult& p)
{
    PointRecord r;
    r.values = {p.avg_fidelity, p.success_probability, p.rejected_probability};
    r.diag.truncation_flag = p.truncation_flag;
    r.diag.mode_leakage = p.mode_leakage;
    r.diag.retained_modes = p.retained_modes;
    return r;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// Average fidelity over the qubit (centre wavelength x bandwidth) grid of the
// config. The summary records the argmax point.
inline SweepResult fidelity_map(const ScenarioConfig& cfg, const SweepOptions& opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    const Scenario sc(cfg);
    const unsigned workers = detail::resolve_workers(opts, cfg);
    SweepResult r;
    r.kind = "fidelity_map";
    r.axes = {{"qubit_wavelength_nm", cfg.qubit.wavelength_nm.linear()},
              {"qubit_sigma_Trad_s", cfg.qubit.sigma_trad_s_range.linear()}};
    r.quantities = {"avg_fidelity", "success_probability", "rejected_probability"};
    require(r.points() > 0, Errc::EmptyScan, "qubit scan is empty");

    const HerSpec her = sc.her(sc.jsa(sc.length(), workers));
    const MeasurementSpec meas = sc.measurement(her);
    const ProtocolOptions popts = sc.protocol();
    const std::size_t nc = r.cols();
    auto pts = detail::run_points(
        r.points(), r.quantities.size(),
        [&](std::size_t i) {
            const auto q = sc.qubit(r.axes[0].values[i / nc], r.axes[1].values[i % nc]);
            return detail::protocol_point(run_protocol(her, q, meas, popts));
        },
        opts, workers, config_hash(cfg) + "-fidelity_map", r.computed_points);
    detail::fill(r, std::move(pts));

    const auto& f = r.values[0];
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (std::isfinite(f[i]) && (!best || f[i] > f[*best])) best = i;
    if (best)
        r.summary["argmax"] = {{"row", *best / nc},
                               {"col", *best % nc},
                               {"qubit_wavelength_nm", r.axes[0].values[*best / nc]},
                               {"qubit_sigma_Trad_s", r.axes[1].values[*best % nc]},
                               {"avg_fidelity", f[*best]}};
    r.summary["failed_points"] = r.failed_points();
    r.provenance = detail::provenance(cfg, r.kind, detail::seconds_since(t0));
    return r;
}

// F, source purity K^-1 and joint-measurement probability against fibre
// length; the qubit is fixed at the config's centre and bandwidth.
inline SweepResult length_sweep(const ScenarioConfig& cfg, std::optional<RangeConfig> lengths_cm = {},
                                const SweepOptions& opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    const RangeConfig range = lengths_cm.value_or(cfg.length_cm);
    detail::check_range(range, "length range", true);
    require(range.hi <= 200.0 && (range.count == 1 || range.hi > range.lo), Errc::InvalidArgument,
            "length range must lie within (0, 200] cm");
    const Scenario sc(cfg);
    const unsigned workers = detail::resolve_workers(opts, cfg);
    SweepResult r;
    r.kind = "length_sweep";
    r.axes = {{"length_cm", range.logarithmic()}};
    r.quantities = {"avg_fidelity", "purity", "heralded_purity", "success_probability"};
    const QubitSpec q = sc.qubit();
    const ProtocolOptions popts = sc.protocol();
    auto pts = detail::run_points(
        r.points(), r.quantities.size(),
        [&](std::size_t i) {
            const double length = cm(r.axes[0].values[i]);
            const auto f = sc.jsa(length, 1);
            const double purity = schmidt_decompose(f).purity;
            const HerSpec her = sc.her(f);
            const double hp = heralded_purity(her.herald);
            auto p = detail::protocol_point(run_protocol(her, q, sc.measurement(her), popts));
            p.values = {p.values[0], purity, hp, p.values[1]};
            return p;
        },
        opts, workers, config_hash(cfg) + "-length_sweep-" + detail::hexfloat(range.lo) + "-" + detail::hexfloat(range.hi) + "-" + std::to_string(range.count),
        r.computed_points);
    detail::fill(r, std::move(pts));

    // smallest length from which both thresholds hold for every longer sample
    std::optional<double> joint;
    for (std::size_t i = r.rows(); i-- > 0;) {
        const double fid = r.values[0][i], pur = r.values[1][i];
        if (!(fid >= 0.9 && pur >= 0.7187)) break;
        joint = r.axes[0].values[i];
    }
    r.summary["joint_threshold_length_cm"] = joint ? nlohmann::json(*joint) : nlohmann::json(nullptr);
    r.summary["qubit"] = {{"wavelength_nm", cfg.qubit.center_nm}, {"sigma_Trad_s", cfg.qubit.sigma_trad_s}};
    r.summary["failed_points"] = r.failed_points();
    r.provenance = detail::provenance(cfg, r.kind, detail::seconds_since(t0));
    return r;
}

// Heralding efficiency P_H / eta against the seed amplitude alpha0.
inline SweepResult heralding_scan(const ScenarioConfig& cfg, std::optional<RangeConfig> alpha0 = {},
                                  const SweepOptions& opts = {})
{
    const auto t0 = std::chrono::steady_clock::now();
    const RangeConfig range = alpha0.value_or(cfg.alpha0);
    detail::check_range(range, "alpha0 range", false);
    require(range.lo >= 0.0 && range.hi <= 2.0, Errc::InvalidArgument, "alpha0 must lie within [0, 2]");
    const Scenario sc(cfg);
    const unsigned workers = detail::resolve_workers(opts, cfg);
    SweepResult r;
    r.kind = "heralding_scan";
    r.axes = {{"alpha0", range.linear()}};
    r.quantities = {"p_h_over_eta", "p_a", "p_ab"};
    const auto f = sc.jsa(sc.length(), workers);
    const auto filter = cfg.herald.filter.to_filter();
    const auto hopts = sc.heralding();
    auto pts = detail::run_points(
        r.points(), r.quantities.size(),
        [&](std::size_t i) {
            const auto h = heralding_efficiency(f, r.axes[0].values[i], filter, {}, hopts);
            detail::PointRecord p;
            p.values = {h.p_h_over_eta, h.p_a, h.p_ab};
            return p;
        },
        opts, workers, config_hash(cfg) + "-heralding_scan-" + detail::hexfloat(range.lo) + "-" + detail::hexfloat(range.hi) + "-" + std::to_string(range.count),
        r.computed_points);
    detail::fill(r, std::move(pts));

    const auto& v = r.values[0];
    if (!v.empty() && std::isfinite(v[0]) && v[0] > 0.0) {
        double dev = 0.0;
        for (double x : v)
            if (std::isfinite(x)) dev = std::max(dev, std::abs(x / v[0] - 1.0));
        r.summary["max_relative_deviation"] = dev;
    }
    r.summary["failed_points"] = r.failed_points();
    r.provenance = detail::provenance(cfg, r.kind, detail::seconds_since(t0));
    return r;
}

// Long-format table: axis coordinates, every quantity and the per-point
// diagnostics on each row.
inline std::string points_csv(const SweepResult& r)
{
    std::string s = "# kind: " + r.kind + "\n";
    for (const auto& a : r.axes) s += "# " + a.name + ": " + join(a.values) + "\n";
    for (std::size_t k = 0; k < r.axes.size(); ++k) s += r.axes[k].name + ',';
    for (const auto& q : r.quantities) s += q + ',';
    s += "ok,truncation_flag,mode_leakage,retained_modes,error\n";
    const std::size_t nc = r.cols();
    for (std::size_t i = 0; i < r.points(); ++i) {
        s += format_double(r.axes[0].values[i / nc]) + ',';
        if (r.axes.size() > 1) s += format_double(r.axes[1].values[i % nc]) + ',';
        for (std::size_t q = 0; q < r.quantities.size(); ++q) s += format_double(r.values[q][i]) + ',';
        const auto& d = r.diagnostics[i];
        std::string err = d.error;
        for (auto& ch : err)
            if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
        s += std::string(d.ok ? "1" : "0") + ',' + (d.truncation_flag ? "1" : "0") + ',' + format_double(d.mode_leakage) + ','
            + std::to_string(d.retained_modes) + ',' + err + '\n';
    }
    return s;
}

// Writes <stem>.csv (long format), one matrix CSV per quantity for 2-D sweeps
// and the <stem>.json sidecar. Returns the written paths.
inline std::vector<std::filesystem::path> write_sweep(const SweepResult& r, const ScenarioConfig& cfg,
                                                      const std::filesystem::path& dir, const std::string& stem)
{
    std::vector<std::filesystem::path> files;
    const auto main = dir / (stem + ".csv");
    write_file(main, points_csv(r));
    files.push_back(main);
    if (r.axes.size() == 2) {
        for (const auto& q : r.quantities) {
            const auto p = dir / (stem + "_" + q + ".csv");
            write_file(p, matrix_csv(q, r.axes[0].name, r.axes[0].values, r.axes[1].name, r.axes[1].values, r.matrix(q)));
            files.push_back(p);
        }
    }
    nlohmann::json side;
    side["provenance"] = r.provenance;
    side["config"] = cfg;
    side["summary"] = r.summary;
    side["quantities"] = r.quantities;
    side["axes"] = nlohmann::json::array();
    for (const auto& a : r.axes) side["axes"].push_back({{"name", a.name}, {"count", a.values.size()}});
    side["files"] = nlohmann::json::array();
    for (const auto& f : files) side["files"].push_back(f.filename().string());
    const auto sidecar = dir / (stem + ".json");
    write_json(sidecar, side);
    files.push_back(sidecar);
    return files;
}

}  // namespace hersim
