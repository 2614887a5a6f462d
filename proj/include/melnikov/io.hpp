#ifndef MELNIKOV_IO_HPP
#define MELNIKOV_IO_HPP

// Data emission: CSV with 17 significant digits and '\n' line endings
// (byte-identical across runs for identical inputs), JSON through
// nlohmann::json with sorted keys.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamics.hpp"
#include "errors.hpp"
#include "melnikov_form.hpp"
#include "splitting.hpp"

namespace melnikov {

inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file '" + path + "'");
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "");
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << g17(row[i]) << (i + 1 < row.size() ? "," : "");
        out << "\n";
    }
}

inline nlohmann::json to_json(const PeriodicOrbitRecord& rec) {
    nlohmann::json j;
    j["point"] = rec.m0.x;
    j["period"] = rec.period;
    j["equilibrium"] = rec.equilibrium;
    j["residual"] = rec.residual;
    j["classification"] = rec.classification_name();
    std::vector<double> re, im;
    for (auto lam : rec.multipliers) {
        re.push_back(lam.real());
        im.push_back(lam.imag());
    }
    j["multipliers_re"] = re;
    j["multipliers_im"] = im;
    std::vector<double> mono;
    for (int r = 0; r < rec.monodromy.rows(); ++r)
        for (int c = 0; c < rec.monodromy.cols(); ++c) mono.push_back(rec.monodromy(r, c));
    j["monodromy_row_major"] = mono;
    return j;
}

inline nlohmann::json to_json(const ZeroRecord& z) {
    return nlohmann::json{{"t0", z.t0},
                          {"residual", z.residual},
                          {"slope", z.slope},
                          {"nondegenerate", z.nondegenerate}};
}

inline nlohmann::json to_json(const CriticalIntegralReport& rep) {
    nlohmann::json j;
    j["labels"] = rep.labels;
    j["c_plus"] = rep.c_plus;
    j["c_minus"] = rep.c_minus;
    j["fit_residual_plus"] = rep.residual_plus;
    j["fit_residual_minus"] = rep.residual_minus;
    j["p"] = rep.p;
    j["homoclinic"] = rep.homoclinic;
    std::vector<std::vector<double>> basis;
    for (int k = 0; k < rep.p; ++k) {
        std::vector<double> col;
        for (int r = 0; r < rep.basis_coefficients.rows(); ++r)
            col.push_back(rep.basis_coefficients(r, k));
        basis.push_back(col);
    }
    j["basis_coefficients"] = basis;
    return j;
}

inline nlohmann::json to_json(const SplittingReport& rep) {
    nlohmann::json j;
    j["amplitude"] = rep.amplitude;
    j["gap_order"] = rep.gap_order;
    j["residual_order"] = rep.residual_order;
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : rep.cells)
        cells.push_back({{"t0", c.t0},
                         {"eps", c.eps},
                         {"gap", c.gap},
                         {"ratio", c.ratio},
                         {"reference", c.reference},
                         {"deviation_rel", c.deviation_rel}});
    j["cells"] = cells;
    return j;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file '" + path + "'");
    out << text;
}

} // namespace melnikov

#endif
