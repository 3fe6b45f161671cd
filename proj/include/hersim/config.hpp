#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hersim/error.hpp"
#include "hersim/heralding.hpp"
#include "hersim/teleport.hpp"
#include "hersim/units.hpp"

namespace hersim {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Values are kept in the units that appear in the key names; the scenario
// layer converts to SI when it builds the physics objects.
struct FilterConfig
{
    std::string kind = "flat";  // flat | gaussian
    double center_nm = 1593.0;
    double fwhm_nm = 10.0;

    DetectorFilter to_filter() const
    {
        if (kind == "flat") return DetectorFilter::flat();
        if (kind == "gaussian") return DetectorFilter::gaussian(nm(center_nm), nm(fwhm_nm));
        fail(Errc::ConfigError, "filter kind must be flat or gaussian, got '" + kind + "'");
    }
};

struct FiberConfig
{
    std::string model = "calibrated";  // calibrated | strand | polynomial | tabulated
    double length_cm = 80.0;
    double phi_nl_per_m = 0.0;
    double operating_pump_nm = 751.1;
    double operating_idler_nm = 1593.0;
    double core_radius_um = 0.0;  // strand; 0 solves for the operating point
    double cladding_index = 1.0;
    double reference_nm = 751.1;  // polynomial
    std::vector<double> beta;     // polynomial, SI units (s^n / m)
    std::string table_csv;        // tabulated
};

struct PumpConfig
{
    double wavelength_nm = 751.1;
    double fwhm_nm = 0.5;
    bool exact_convolution = false;
    std::size_t quadrature = 48;
};

struct JsaConfig
{
    std::size_t grid_points = 256;
    double half_widths = 6.0;
};

struct HeraldConfig
{
    std::string arm = "idler";  // heralded (kept) photon: signal | idler
    FilterConfig filter{};
    std::size_t cutoff = 20;

    HeraldedArm to_arm() const
    {
        if (arm == "signal") return HeraldedArm::Signal;
        if (arm == "idler") return HeraldedArm::Idler;
        fail(Errc::ConfigError, "herald arm must be signal or idler, got '" + arm + "'");
    }
};

struct EnvelopeConfig
{
    double center_nm = 1593.0;
    double sigma_trad_s = 1.0;
};

struct HerConfig
{
    std::string variant = "pd";  // pd | pa
    std::string sign = "auto";   // auto | minus | plus
    double alpha_re = 0.0;
    double alpha_im = 0.0;
    std::optional<EnvelopeConfig> coherent_envelope;  // unset: matched to the qubit
    std::size_t schmidt_modes = 0;
};

struct RangeConfig
{
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 1;

    std::vector<double> linear() const { return count == 1 ? std::vector<double>{lo} : linspace(lo, hi, count); }
    std::vector<double> logarithmic() const { return count == 1 ? std::vector<double>{lo} : logspace(lo, hi, count); }
};

struct QubitConfig
{
    double center_nm = 1593.0;
    double sigma_trad_s = 1.0;
    RangeConfig wavelength_nm{1588.0, 1598.0, 41};
    RangeConfig sigma_trad_s_range{0.2, 3.0, 41};
};

struct MeasurementConfig
{
    double tau = 0.99;
    FilterConfig detector{"gaussian", 1593.0, 10.0};
    std::vector<std::array<int, 2>> accepted{{0, 1}, {1, 0}};
};

struct ProtocolConfig
{
    std::size_t theta_samples = 32;
    double theta_i = 0.0;
    double theta_f = 2.0 * std::numbers::pi;
    std::size_t cutoff = 3;
    bool check_cutoff = true;
    double cutoff_tolerance = 1e-3;
    double retained_mass = 0.999;
    std::size_t max_modes = 64;
    double envelope_half_width = 7.0;
};

struct PhasematchScanConfig
{
    RangeConfig pump_nm{700.0, 800.0, 400};
    double detuning_max_trad_s = 1600.0;
    std::size_t detuning_count = 400;
};

struct OutputConfig
{
    std::string directory = "out";
    unsigned workers = 0;  // 0: hardware concurrency
};

struct ScenarioConfig
{
    int schema_version = kSchemaVersion;
    FiberConfig fiber{};
    PumpConfig pump{};
    JsaConfig jsa{};
    HeraldConfig herald{};
    HerConfig her{};
    QubitConfig qubit{};
    MeasurementConfig measurement{};
    ProtocolConfig protocol{};
    PhasematchScanConfig phasematch{};
    RangeConfig length_cm{1.0, 100.0, 60};
    RangeConfig alpha0{0.0, 2.0, 21};
    OutputConfig output{};
};

inline void to_json(json& j, const FilterConfig& c)
{
    j = {{"kind", c.kind}, {"center_nm", c.center_nm}, {"fwhm_nm", c.fwhm_nm}};
}
inline void to_json(json& j, const FiberConfig& c)
{
    j = {{"model", c.model},
         {"length_cm", c.length_cm},
         {"phi_nl_per_m", c.phi_nl_per_m},
         {"operating_pump_nm", c.operating_pump_nm},
         {"operating_idler_nm", c.operating_idler_nm},
         {"core_radius_um", c.core_radius_um},
         {"cladding_index", c.cladding_index},
         {"reference_nm", c.reference_nm},
         {"beta", c.beta},
         {"table_csv", c.table_csv}};
}
inline void to_json(json& j, const PumpConfig& c)
{
    j = {{"wavelength_nm", c.wavelength_nm},
         {"fwhm_nm", c.fwhm_nm},
         {"exact_convolution", c.exact_convolution},
         {"quadrature", c.quadrature}};
}
inline void to_json(json& j, const JsaConfig& c) { j = {{"grid_points", c.grid_points}, {"half_widths", c.half_widths}}; }
inline void to_json(json& j, const HeraldConfig& c)
{
    j = {{"arm", c.arm}, {"filter", c.filter}, {"cutoff", c.cutoff}};
}
inline void to_json(json& j, const EnvelopeConfig& c)
{
    j = {{"center_nm", c.center_nm}, {"sigma_trad_s", c.sigma_trad_s}};
}
inline void to_json(json& j, const HerConfig& c)
{
    j = {{"variant", c.variant},
         {"sign", c.sign},
         {"alpha_re", c.alpha_re},
         {"alpha_im", c.alpha_im},
         {"coherent_envelope", c.coherent_envelope ? json(*c.coherent_envelope) : json(nullptr)},
         {"schmidt_modes", c.schmidt_modes}};
}
inline void to_json(json& j, const RangeConfig& c) { j = {{"lo", c.lo}, {"hi", c.hi}, {"count", c.count}}; }
inline void to_json(json& j, const QubitConfig& c)
{
    j = {{"center_nm", c.center_nm},
         {"sigma_trad_s", c.sigma_trad_s},
         {"wavelength_nm", c.wavelength_nm},
         {"sigma_trad_s_range", c.sigma_trad_s_range}};
}
inline void to_json(json& j, const MeasurementConfig& c)
{
    j = {{"tau", c.tau}, {"detector", c.detector}, {"accepted", c.accepted}};
}
inline void to_json(json& j, const ProtocolConfig& c)
{
    j = {{"theta_samples", c.theta_samples},
         {"theta_i", c.theta_i},
         {"theta_f", c.theta_f},
         {"cutoff", c.cutoff},
         {"check_cutoff", c.check_cutoff},
         {"cutoff_tolerance", c.cutoff_tolerance},
         {"retained_mass", c.retained_mass},
         {"max_modes", c.max_modes},
         {"envelope_half_width", c.envelope_half_width}};
}
inline void to_json(json& j, const PhasematchScanConfig& c)
{
    j = {{"pump_nm", c.pump_nm}, {"detuning_max_trad_s", c.detuning_max_trad_s}, {"detuning_count", c.detuning_count}};
}
inline void to_json(json& j, const OutputConfig& c) { j = {{"directory", c.directory}, {"workers", c.workers}}; }
inline void to_json(json& j, const ScenarioConfig& c)
{
    j = {{"schema_version", c.schema_version},
         {"fiber", c.fiber},
         {"pump", c.pump},
         {"jsa", c.jsa},
         {"herald", c.herald},
         {"her", c.her},
         {"qubit", c.qubit},
         {"measurement", c.measurement},
         {"protocol", c.protocol},
         {"phasematch", c.phasematch},
         {"length_cm", c.length_cm},
         {"alpha0", c.alpha0},
         {"output", c.output}};
}

namespace detail {

template <typename T>
void read(const json& j, const char* key, T& out)
{
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        fail(Errc::ConfigError, std::string("bad value for '") + key + "': " + e.what());
    }
}

}  // namespace detail

inline void from_json(const json& j, FilterConfig& c)
{
    detail::read(j, "kind", c.kind);
    detail::read(j, "center_nm", c.center_nm);
    detail::read(j, "fwhm_nm", c.fwhm_nm);
}
inline void from_json(const json& j, FiberConfig& c)
{
    detail::read(j, "model", c.model);
    detail::read(j, "length_cm", c.length_cm);
    detail::read(j, "phi_nl_per_m", c.phi_nl_per_m);
    detail::read(j, "operating_pump_nm", c.operating_pump_nm);
    detail::read(j, "operating_idler_nm", c.operating_idler_nm);
    detail::read(j, "core_radius_um", c.core_radius_um);
    detail::read(j, "cladding_index", c.cladding_index);
    detail::read(j, "reference_nm", c.reference_nm);
    detail::read(j, "beta", c.beta);
    detail::read(j, "table_csv", c.table_csv);
}
inline void from_json(const json& j, PumpConfig& c)
{
    detail::read(j, "wavelength_nm", c.wavelength_nm);
    detail::read(j, "fwhm_nm", c.fwhm_nm);
    detail::read(j, "exact_convolution", c.exact_convolution);
    detail::read(j, "quadrature", c.quadrature);
}
inline void from_json(const json& j, JsaConfig& c)
{
    detail::read(j, "grid_points", c.grid_points);
    detail::read(j, "half_widths", c.half_widths);
}
inline void from_json(const json& j, HeraldConfig& c)
{
    detail::read(j, "arm", c.arm);
    detail::read(j, "filter", c.filter);
    detail::read(j, "cutoff", c.cutoff);
}
inline void from_json(const json& j, EnvelopeConfig& c)
{
    detail::read(j, "center_nm", c.center_nm);
    detail::read(j, "sigma_trad_s", c.sigma_trad_s);
}
inline void from_json(const json& j, HerConfig& c)
{
    detail::read(j, "variant", c.variant);
    detail::read(j, "sign", c.sign);
    detail::read(j, "alpha_re", c.alpha_re);
    detail::read(j, "alpha_im", c.alpha_im);
    if (j.contains("coherent_envelope")) {
        if (j.at("coherent_envelope").is_null())
            c.coherent_envelope.reset();
        else
            c.coherent_envelope = j.at("coherent_envelope").get<EnvelopeConfig>();
    }
    detail::read(j, "schmidt_modes", c.schmidt_modes);
}
inline void from_json(const json& j, RangeConfig& c)
{
    detail::read(j, "lo", c.lo);
    detail::read(j, "hi", c.hi);
    detail::read(j, "count", c.count);
}
inline void from_json(const json& j, QubitConfig& c)
{
    detail::read(j, "center_nm", c.center_nm);
    detail::read(j, "sigma_trad_s", c.sigma_trad_s);
    detail::read(j, "wavelength_nm", c.wavelength_nm);
    detail::read(j, "sigma_trad_s_range", c.sigma_trad_s_range);
}
inline void from_json(const json& j, MeasurementConfig& c)
{
    detail::read(j, "tau", c.tau);
    detail::read(j, "detector", c.detector);
    detail::read(j, "accepted", c.accepted);
}
inline void from_json(const json& j, ProtocolConfig& c)
{
    detail::read(j, "theta_samples", c.theta_samples);
    detail::read(j, "theta_i", c.theta_i);
    detail::read(j, "theta_f", c.theta_f);
    detail::read(j, "cutoff", c.cutoff);
    detail::read(j, "check_cutoff", c.check_cutoff);
    detail::read(j, "cutoff_tolerance", c.cutoff_tolerance);
    detail::read(j, "retained_mass", c.retained_mass);
    detail::read(j, "max_modes", c.max_modes);
    detail::read(j, "envelope_half_width", c.envelope_half_width);
}
inline void from_json(const json& j, PhasematchScanConfig& c)
{
    detail::read(j, "pump_nm", c.pump_nm);
    detail::read(j, "detuning_max_trad_s", c.detuning_max_trad_s);
    detail::read(j, "detuning_count", c.detuning_count);
}
inline void from_json(const json& j, OutputConfig& c)
{
    detail::read(j, "directory", c.directory);
    detail::read(j, "workers", c.workers);
}
inline void from_json(const json& j, ScenarioConfig& c)
{
    detail::read(j, "schema_version", c.schema_version);
    detail::read(j, "fiber", c.fiber);
    detail::read(j, "pump", c.pump);
    detail::read(j, "jsa", c.jsa);
    detail::read(j, "herald", c.herald);
    detail::read(j, "her", c.her);
    detail::read(j, "qubit", c.qubit);
    detail::read(j, "measurement", c.measurement);
    detail::read(j, "protocol", c.protocol);
    detail::read(j, "phasematch", c.phasematch);
    detail::read(j, "length_cm", c.length_cm);
    detail::read(j, "alpha0", c.alpha0);
    detail::read(j, "output", c.output);
}

namespace detail {

// Every key of `given` must exist in the key schema; arrays are leaves.
inline void check_known_keys(const json& given, const json& reference, const std::string& path)
{
    if (!given.is_object() || !reference.is_object()) return;
    for (const auto& [key, value] : given.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        require(reference.contains(key), Errc::ConfigError, "unknown config key '" + where + "'");
        check_known_keys(value, reference.at(key), where);
    }
}

inline void check_range(const RangeConfig& r, const std::string& name, bool positive)
{
    require(r.count >= 1, Errc::ConfigError, name + ".count must be at least 1");
    require(std::isfinite(r.lo) && std::isfinite(r.hi), Errc::ConfigError, name + " bounds must be finite");
    require(r.count == 1 || r.hi > r.lo, Errc::ConfigError, name + ".hi must exceed lo");
    if (positive) require(r.lo > 0.0, Errc::ConfigError, name + ".lo must be positive");
}

}  // namespace detail

inline void validate(const ScenarioConfig& c)
{
    require(c.schema_version == kSchemaVersion, Errc::ConfigError,
            "unsupported schema_version " + std::to_string(c.schema_version));
    const auto& f = c.fiber;
    require(f.model == "calibrated" || f.model == "strand" || f.model == "polynomial" || f.model == "tabulated",
            Errc::ConfigError, "fiber.model must be calibrated, strand, polynomial or tabulated");
    require(f.length_cm > 0.0, Errc::ConfigError, "fiber.length_cm must be positive");
    require(f.model != "polynomial" || !f.beta.empty(), Errc::ConfigError, "fiber.beta is required for a polynomial model");
    require(f.model != "tabulated" || !f.table_csv.empty(), Errc::ConfigError, "fiber.table_csv is required for a tabulated model");
    require(c.pump.fwhm_nm > 0.0 && c.pump.wavelength_nm > 0.0, Errc::ConfigError, "pump wavelength and FWHM must be positive");
    require(c.jsa.grid_points >= 8, Errc::ConfigError, "jsa.grid_points must be at least 8");
    (void)c.herald.to_arm();
    (void)c.herald.filter.to_filter();
    (void)c.measurement.detector.to_filter();
    require(c.her.variant == "pd" || c.her.variant == "pa", Errc::ConfigError, "her.variant must be pd or pa");
    require(c.her.sign == "auto" || c.her.sign == "minus" || c.her.sign == "plus", Errc::ConfigError,
            "her.sign must be auto, minus or plus");
    require(c.qubit.sigma_trad_s > 0.0, Errc::ConfigError, "qubit.sigma_trad_s must be positive");
    detail::check_range(c.qubit.wavelength_nm, "qubit.wavelength_nm", true);
    detail::check_range(c.qubit.sigma_trad_s_range, "qubit.sigma_trad_s_range", true);
    detail::check_range(c.length_cm, "length_cm", true);
    require(c.length_cm.hi <= 200.0, Errc::ConfigError, "length_cm.hi must not exceed 200");
    detail::check_range(c.alpha0, "alpha0", false);
    require(c.alpha0.lo >= 0.0 && c.alpha0.hi <= 2.0, Errc::ConfigError, "alpha0 must lie within [0, 2]");
    detail::check_range(c.phasematch.pump_nm, "phasematch.pump_nm", true);
    require(c.measurement.tau >= 0.0 && c.measurement.tau < 1.0, Errc::ConfigError, "measurement.tau must lie in [0, 1)");
    require(!c.measurement.accepted.empty(), Errc::ConfigError, "measurement.accepted must not be empty");
    require(c.protocol.theta_samples >= 1 && c.protocol.theta_f > c.protocol.theta_i, Errc::ConfigError,
            "protocol theta interval is empty");
}

// Default document with every optional block filled in.
inline json key_schema()
{
    ScenarioConfig c;
    c.her.coherent_envelope = EnvelopeConfig{};
    return c;
}

inline ScenarioConfig config_from_json(const json& j)
{
    require(j.is_object(), Errc::ConfigError, "config must be a JSON object");
    detail::check_known_keys(j, key_schema(), "");
    require(j.contains("schema_version"), Errc::ConfigError, "config is missing schema_version");
    ScenarioConfig c;
    from_json(j, c);
    validate(c);
    return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    require(static_cast<bool>(in), Errc::ConfigError, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        fail(Errc::ConfigError, "cannot parse " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// Applies "a.b.c=value"; the value is read as JSON when it parses, otherwise
// as a plain string.
inline ScenarioConfig apply_override(const ScenarioConfig& c, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, Errc::ConfigError, "override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json doc = c;
    json::json_pointer ptr;
    std::stringstream ks(key);
    for (std::string part; std::getline(ks, part, '.');) {
        require(!part.empty(), Errc::ConfigError, "empty path segment in " + key);
        ptr /= part;
    }
    doc[ptr] = value;
    return config_from_json(doc);
}

inline std::string canonical_json(const ScenarioConfig& c) { return json(c).dump(); }

// FNV-1a over the canonical document, output settings excluded so that the
// hash identifies the physics only.
inline std::string config_hash(const ScenarioConfig& c)
{
    json j = c;
    j.erase("output");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace hersim
