#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hullopt/common.hpp"
#include "hullopt/hull/fem.hpp"

namespace hullopt {

namespace fs = std::filesystem;

inline void write_f64(const fs::path& path, const double* data, std::size_t n)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            auto bits = std::bit_cast<std::uint64_t>(data[i]);
            char b[8];
            for (int k = 0; k < 8; ++k)
                b[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
            out.write(b, 8);
        }
    }
    if (!out)
        throw Error("write failed for " + path.string());
}

inline std::vector<double> read_f64(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot read " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() % 8 != 0)
        throw DataError("truncated array file " + path.string());
    std::vector<double> v(raw.size() / 8);
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(raw[i * 8 + static_cast<std::size_t>(k)]))
                    << (8 * k);
        v[i] = std::bit_cast<double>(bits);
    }
    return v;
}

inline std::uint64_t snapshot_checksum(const StressSnapshot& s)
{
    std::uint64_t h = fnv1a(s.config.data(), s.config.size() * sizeof(double));
    for (const auto& l : s.loads) {
        for (const auto& f : l.stress)
            h = fnv1a(f.data(), static_cast<std::size_t>(f.size()) * sizeof(double), h);
        h = fnv1a(l.displacement.data(), static_cast<std::size_t>(l.displacement.size()) * sizeof(double), h);
    }
    return h;
}

/// One directory per snapshot: manifest.json plus one raw array per (load, component) and per load displacement.
inline void save_snapshot(const fs::path& dir, const StressSnapshot& s)
{
    fs::create_directories(dir);
    nlohmann::json m;
    m["config"] = s.config;
    m["loads"] = nlohmann::json::array();
    for (auto l : kLoadKinds)
        m["loads"].push_back(std::string(load_name(l)));
    m["components"] = nlohmann::json::array();
    for (std::size_t c = 0; c < kNumComponents; ++c)
        m["components"].push_back(std::string(component_name(c)));
    m["element_count"] = s.element_count();
    m["dof_count"] = s.loads[0].displacement.size();
    m["checksum"] = hex64(snapshot_checksum(s));
    for (auto l : kLoadKinds) {
        const auto& r = s.loads[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < kNumComponents; ++c)
            write_f64(dir / (std::string(load_name(l)) + "_" + std::string(component_name(c)) + ".f64"),
                      r.stress[c].data(), static_cast<std::size_t>(r.stress[c].size()));
        write_f64(dir / (std::string(load_name(l)) + "_u.f64"), r.displacement.data(),
                  static_cast<std::size_t>(r.displacement.size()));
    }
    std::ofstream(dir / "manifest.json") << m.dump(1) << '\n';
}

inline StressSnapshot load_snapshot(const fs::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    if (!in)
        throw DataError("missing snapshot manifest in " + dir.string());
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt snapshot manifest: ") + e.what());
    }
    StressSnapshot s;
    s.config = m.at("config").get<Configuration>();
    const auto ne = m.at("element_count").get<std::size_t>();
    for (auto l : kLoadKinds) {
        auto& r = s.loads[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < kNumComponents; ++c) {
            auto v = read_f64(dir / (std::string(load_name(l)) + "_" + std::string(component_name(c)) + ".f64"));
            if (v.size() != ne)
                throw DataError("snapshot field length mismatch in " + dir.string());
            r.stress[c] = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
        auto u = read_f64(dir / (std::string(load_name(l)) + "_u.f64"));
        r.displacement = Eigen::Map<Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
    }
    if (hex64(snapshot_checksum(s)) != m.at("checksum").get<std::string>())
        throw DataError("snapshot checksum mismatch in " + dir.string());
    return s;
}

} // namespace hullopt
