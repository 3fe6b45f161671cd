#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hersim/error.hpp"
#include "hersim/heralding.hpp"
#include "hersim/jsa.hpp"
#include "hersim/phasematching.hpp"
#include "hersim/units.hpp"

namespace hersim {

// Shortest-free, locale-independent rendering that round-trips exactly.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join(const std::vector<double>& v, char sep = ',')
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += sep;
        s += format_double(v[i]);
    }
    return s;
}

// Writes through a temporary file so readers never see a half-written result.
inline void write_file(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), Errc::IoError, "cannot write " + tmp.string());
        out << contents;
        require(static_cast<bool>(out), Errc::IoError, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j)
{
    write_file(path, j.dump(2) + "\n");
}

// Matrix CSV: '#' comment lines carry the axis values; rows of data follow.
inline std::string matrix_csv(const std::string& quantity, const std::string& row_name, const std::vector<double>& rows,
                              const std::string& col_name, const std::vector<double>& cols, const Eigen::MatrixXd& m)
{
    std::string s = "# quantity: " + quantity + "\n";
    s += "# rows: " + row_name + "\n# " + row_name + ": " + join(rows) + "\n";
    s += "# cols: " + col_name + "\n# " + col_name + ": " + join(cols) + "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) s += ',';
            s += format_double(m(r, c));
        }
        s += '\n';
    }
    return s;
}

inline std::string phasematch_csv(const PhasematchMap& m)
{
    std::string s = "# phasematching map: " + std::to_string(m.pump_wavelength.size()) + " pump wavelengths x "
        + std::to_string(m.detuning.size()) + " detunings\n";
    s += "pump_wavelength_nm,detuning_Trad_s,delta_k_per_m,theta_si_deg\n";
    for (std::size_t r = 0; r < m.pump_wavelength.size(); ++r)
        for (std::size_t c = 0; c < m.detuning.size(); ++c) {
            const auto ri = static_cast<Eigen::Index>(r), ci = static_cast<Eigen::Index>(c);
            s += format_double(m.pump_wavelength[r] / nm(1.0)) + ',' + format_double(m.detuning[c] / kTera) + ','
                + format_double(m.delta_k(ri, ci)) + ',' + format_double(degrees(m.theta_si(ri, ci))) + '\n';
        }
    return s;
}

inline std::string contours_csv(const PhasematchMap& m)
{
    std::string s = "contour_id,pump_wavelength_nm,detuning_Trad_s\n";
    for (std::size_t k = 0; k < m.contours.size(); ++k)
        for (const auto& p : m.contours[k])
            s += std::to_string(k) + ',' + format_double(p.pump_wavelength / nm(1.0)) + ','
                + format_double(p.detuning / kTera) + '\n';
    return s;
}

inline std::string jsi_csv(const JointAmplitude& f)
{
    std::vector<double> ls, li;
    for (double w : f.grid.signal.values()) ls.push_back(omega_to_wavelength(w) / nm(1.0));
    for (double w : f.grid.idler.values()) li.push_back(omega_to_wavelength(w) / nm(1.0));
    return matrix_csv("jsi", "signal_wavelength_nm", ls, "idler_wavelength_nm", li, jsi(f));
}

inline nlohmann::json schmidt_json(const SchmidtResult& s, std::size_t keep = 64)
{
    std::vector<double> l;
    for (Eigen::Index n = 0; n < s.lambdas.size() && static_cast<std::size_t>(n) < keep; ++n) l.push_back(s.lambdas(n));
    return {{"lambdas", l}, {"K", s.cooperativity}, {"purity", s.purity}};
}

}  // namespace hersim
