#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "hullopt/common.hpp"
#include "hullopt/hull/parameter_space.hpp"

namespace hullopt {

enum class RegionTag { Deck, Bulkhead, Shell, InnerBottom, Bottom };

inline std::string_view region_name(RegionTag t)
{
    switch (t) {
    case RegionTag::Deck: return "deck";
    case RegionTag::Bulkhead: return "bulkhead";
    case RegionTag::Shell: return "shell";
    case RegionTag::InnerBottom: return "inner_bottom";
    case RegionTag::Bottom: return "bottom";
    }
    return "?";
}

struct Node {
    double x = 0.0; // m, longitudinal
    double z = 0.0; // m, vertical
};

struct Element {
    int id = 0;
    /// -1 for elements with a fixed thickness.
    int patch_id = -1;
    std::array<int, 4> nodes{}; // counter-clockwise
    double centroid_z = 0.0;    // m
    double area = 0.0;          // m^2
    double panel_width_b = 0.0; // m
    double panel_length_a = 0.0;
    RegionTag region = RegionTag::Shell;
    double fixed_thickness = 0.0; // mm, used when patch_id < 0
};

struct Patch {
    int id = 0;
    std::vector<int> element_ids;
    double linear_density_coeff = 0.0; // t/mm
    double vcg_p = 0.0;                // m
};

struct Material {
    double youngs_modulus = 206000.0; // MPa
    double poisson = 0.3;
    double density = 7.85; // t/m^3
};

struct LoadCase {
    LoadKind kind = LoadKind::Hogging;
    /// Consistent nodal forces (N), interleaved (fx, fz) per node.
    std::vector<double> nodal_forces;
    /// Uniform lateral pressure per element (Pa), applied as a downward in-plane load.
    std::vector<double> lateral_pressure;
};

/// A parameter group of the model description: which region selectors it controls.
struct GroupSpec {
    std::string name;
    std::vector<std::string> selectors;
    std::vector<double> domain;
    double default_value = 0.0;
};

/// Desk-scale hull girder description: an unfolded side elevation meshed with quads.
struct ModelSpec {
    int nx = 80;
    int nz = 25;
    double dx = 0.7; // m
    double dz = 0.7;
    int bottom_rows = 1;
    int inner_bottom_rows = 1;
    std::vector<int> deck_rows;
    std::vector<int> external_bulkhead_cols;
    std::vector<int> internal_bulkhead_cols;
    /// Shell rows at or above this index are superstructure (fixed unless a group selects them).
    int superstructure_row = 1 << 30;
    int patch_nx = 8;
    int patch_nz = 2;
    double panel_width_b = 0.7;
    double panel_length_a = 2.1;
    double fixed_thickness = 8.0; // mm
    std::vector<GroupSpec> groups;
    double end_moment = 0.0;   // N m, positive = hogging
    double wave_load = 0.0;    // Pa amplitude, mirrored between hogging and sagging
    double pressure = 0.0;     // Pa, same sign in both cases
    int monitored_node = -1;   // -1: bottom node at mid-span
    Material material;
    double extra_fixed_mass = 0.0; // t
    double extra_fixed_vcg = 0.0;  // m
};

struct HullModel {
    ModelSpec spec;
    std::vector<Node> nodes;
    std::vector<Element> elements;
    std::vector<Patch> patches;
    ParameterSpace space;
    Configuration default_config;
    std::array<LoadCase, kNumLoads> loads;
    std::vector<int> fixed_dofs;
    int monitored_node = 0;
    Material material;
    double m_fixed = 0.0;
    double vcg_fixed = 0.0;

    std::size_t element_count() const noexcept { return elements.size(); }
    std::size_t node_count() const noexcept { return nodes.size(); }

    std::size_t parameterized_element_count() const
    {
        return static_cast<std::size_t>(
            std::count_if(elements.begin(), elements.end(), [](const Element& e) { return e.patch_id >= 0; }));
    }

    /// Element -> parameter index under a given space (-1 for fixed elements).
    std::vector<int> element_parameters(const ParameterSpace& s) const
    {
        if (s.patch_count() != patches.size())
            throw DataError("parameter space does not match the model's patches");
        std::vector<int> out(elements.size(), -1);
        for (const auto& e : elements)
            if (e.patch_id >= 0)
                out[static_cast<std::size_t>(e.id)] = s.patch_owner()[static_cast<std::size_t>(e.patch_id)];
        return out;
    }

    /// Per-element thickness (mm) for a configuration.
    std::vector<double> element_thickness(const ParameterSpace& s, const Configuration& x) const
    {
        if (x.size() != s.size())
            throw DomainError("configuration size does not match the parameter space");
        const auto owner = element_parameters(s);
        std::vector<double> t(elements.size());
        for (std::size_t e = 0; e < elements.size(); ++e)
            t[e] = owner[e] >= 0 ? x[static_cast<std::size_t>(owner[e])] : elements[e].fixed_thickness;
        return t;
    }
};

namespace detail {

inline void add_consistent_edge_load(std::vector<double>& f, int na, int nb, double h, double qa, double qb, int dof)
{
    f[static_cast<std::size_t>(2 * na + dof)] += h * (2.0 * qa + qb) / 6.0;
    f[static_cast<std::size_t>(2 * nb + dof)] += h * (qa + 2.0 * qb) / 6.0;
}

inline bool contains(const std::vector<int>& v, int k) { return std::find(v.begin(), v.end(), k) != v.end(); }

} // namespace detail

/// Builds the mesh, patch layout, initial parameterization and both load cases.
inline HullModel build_demo_model(const ModelSpec& spec)
{
    if (spec.nx < 1 || spec.nz < 1 || !(spec.dx > 0.0) || !(spec.dz > 0.0))
        throw ConfigError("model grid needs at least one element with positive size");
    if (spec.groups.empty())
        throw ConfigError("model needs at least one parameter group");
    if (spec.patch_nx < 1 || spec.patch_nz < 1)
        throw ConfigError("patch size must be positive");
    if (!(spec.panel_width_b > 0.0) || !(spec.panel_length_a > 0.0))
        throw ConfigError("panel dimensions must be positive");

    HullModel m;
    m.spec = spec;
    m.material = spec.material;
    const int nx = spec.nx;
    const int nz = spec.nz;
    auto node_id = [nx](int row, int col) { return row * (nx + 1) + col; };

    m.nodes.resize(static_cast<std::size_t>((nx + 1) * (nz + 1)));
    for (int r = 0; r <= nz; ++r)
        for (int c = 0; c <= nx; ++c)
            m.nodes[static_cast<std::size_t>(node_id(r, c))] = Node{c * spec.dx, r * spec.dz};

    std::map<std::string, int> selector_group;
    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
        if (spec.groups[g].domain.empty())
            throw ConfigError("group '" + spec.groups[g].name + "' has an empty domain");
        for (const auto& sel : spec.groups[g].selectors) {
            static const std::set<std::string> known{"bottom",           "inner_bottom",      "deck",
                                                     "external_bulkhead", "internal_bulkhead", "shell",
                                                     "superstructure"};
            if (!known.count(sel))
                throw ConfigError("unknown region selector '" + sel + "'");
            if (!selector_group.emplace(sel, static_cast<int>(g)).second)
                throw ConfigError("selector '" + sel + "' assigned to two groups");
        }
    }

    std::map<std::tuple<std::string, int, int>, int> patch_keys;
    std::vector<std::vector<int>> group_patches(spec.groups.size());
    m.elements.reserve(static_cast<std::size_t>(nx * nz));
    for (int r = 0; r < nz; ++r) {
        for (int c = 0; c < nx; ++c) {
            Element e;
            e.id = r * nx + c;
            e.nodes = {node_id(r, c), node_id(r, c + 1), node_id(r + 1, c + 1), node_id(r + 1, c)};
            e.centroid_z = (r + 0.5) * spec.dz;
            e.area = spec.dx * spec.dz;
            e.panel_width_b = spec.panel_width_b;
            e.panel_length_a = spec.panel_length_a;
            e.fixed_thickness = spec.fixed_thickness;

            std::string sel;
            std::tuple<std::string, int, int> key;
            if (r < spec.bottom_rows) {
                e.region = RegionTag::Bottom;
                sel = "bottom";
                key = {sel, r / spec.patch_nz, c / spec.patch_nx};
            } else if (r < spec.bottom_rows + spec.inner_bottom_rows) {
                e.region = RegionTag::InnerBottom;
                sel = "inner_bottom";
                key = {sel, r / spec.patch_nz, c / spec.patch_nx};
            } else if (detail::contains(spec.deck_rows, r)) {
                e.region = RegionTag::Deck;
                sel = "deck";
                key = {sel, r, c / spec.patch_nx};
            } else if (detail::contains(spec.external_bulkhead_cols, c)) {
                e.region = RegionTag::Bulkhead;
                sel = "external_bulkhead";
                key = {sel, c, r / spec.patch_nz};
            } else if (detail::contains(spec.internal_bulkhead_cols, c)) {
                e.region = RegionTag::Bulkhead;
                sel = "internal_bulkhead";
                key = {sel, c, r / spec.patch_nz};
            } else {
                e.region = RegionTag::Shell;
                sel = r >= spec.superstructure_row ? "superstructure" : "shell";
                key = {sel, r / spec.patch_nz, c / spec.patch_nx};
            }

            if (auto g = selector_group.find(sel); g != selector_group.end()) {
                auto [it, inserted] = patch_keys.emplace(key, static_cast<int>(m.patches.size()));
                if (inserted) {
                    Patch p;
                    p.id = it->second;
                    m.patches.push_back(p);
                    group_patches[static_cast<std::size_t>(g->second)].push_back(p.id);
                }
                e.patch_id = it->second;
                m.patches[static_cast<std::size_t>(e.patch_id)].element_ids.push_back(e.id);
            }
            m.elements.push_back(e);
        }
    }

    const double rho = spec.material.density;
    for (auto& p : m.patches) {
        double area = 0.0, moment = 0.0;
        for (int eid : p.element_ids) {
            const auto& e = m.elements[static_cast<std::size_t>(eid)];
            area += e.area;
            moment += e.area * e.centroid_z;
        }
        p.linear_density_coeff = rho * area / 1000.0;
        p.vcg_p = moment / area;
    }

    std::vector<ParameterDef> defs;
    for (std::size_t g = 0; g < spec.groups.size(); ++g) {
        if (group_patches[g].empty())
            throw ConfigError("group '" + spec.groups[g].name + "' selects no element");
        ParameterDef d;
        d.name = spec.groups[g].name;
        d.patch_ids = group_patches[g];
        d.domain = spec.groups[g].domain;
        double dens = 0.0, mom = 0.0;
        for (int pid : d.patch_ids) {
            const auto& p = m.patches[static_cast<std::size_t>(pid)];
            dens += p.linear_density_coeff;
            mom += p.linear_density_coeff * p.vcg_p;
        }
        d.linear_density = dens;
        d.vcg = mom / dens;
        defs.push_back(std::move(d));
        m.default_config.push_back(spec.groups[g].default_value);
    }
    m.space = ParameterSpace(std::move(defs), m.patches.size());
    {
        std::vector<double> dens, vcg;
        for (const auto& p : m.patches) {
            dens.push_back(p.linear_density_coeff);
            vcg.push_back(p.vcg_p);
        }
        m.space.set_patch_properties(std::move(dens), std::move(vcg));
    }
    m.space.validate(m.default_config);

    double mf = spec.extra_fixed_mass;
    double mom = spec.extra_fixed_mass * spec.extra_fixed_vcg;
    for (const auto& e : m.elements) {
        if (e.patch_id >= 0)
            continue;
        const double mass = rho * e.area * e.fixed_thickness / 1000.0;
        mf += mass;
        mom += mass * e.centroid_z;
    }
    m.m_fixed = mf;
    m.vcg_fixed = mf > 0.0 ? mom / mf : 0.0;

    // Simply supported ends: vertical displacement blocked along both end edges,
    // longitudinal displacement blocked at mid-height of the left end.
    for (int r = 0; r <= nz; ++r) {
        m.fixed_dofs.push_back(2 * node_id(r, 0) + 1);
        m.fixed_dofs.push_back(2 * node_id(r, nx) + 1);
    }
    m.fixed_dofs.push_back(2 * node_id(nz / 2, 0));
    std::sort(m.fixed_dofs.begin(), m.fixed_dofs.end());

    const double height = nz * spec.dz;
    const double length = nx * spec.dx;
    const double kappa = 12.0 * spec.end_moment / (height * height * height);
    for (auto kind : kLoadKinds) {
        auto& lc = m.loads[static_cast<std::size_t>(kind)];
        lc.kind = kind;
        lc.nodal_forces.assign(2 * m.nodes.size(), 0.0);
        lc.lateral_pressure.assign(m.elements.size(), spec.pressure);
        const double sign = kind == LoadKind::Hogging ? 1.0 : -1.0;
        // Linear end traction profile: tension on top under hogging.
        for (int r = 0; r < nz; ++r) {
            const double qa = sign * kappa * (r * spec.dz - 0.5 * height);
            const double qb = sign * kappa * ((r + 1) * spec.dz - 0.5 * height);
            detail::add_consistent_edge_load(lc.nodal_forces, node_id(r, nx), node_id(r + 1, nx), spec.dz, qa, qb, 0);
            detail::add_consistent_edge_load(lc.nodal_forces, node_id(r, 0), node_id(r + 1, 0), spec.dz, -qa, -qb, 0);
        }
        // Wave load: upward at mid-span under hogging, self-balanced along the length.
        for (const auto& e : m.elements) {
            const auto& n0 = m.nodes[static_cast<std::size_t>(e.nodes[0])];
            const double xc = n0.x + 0.5 * spec.dx;
            const double wave = sign * spec.wave_load * std::cos(2.0 * std::numbers::pi * (xc / length - 0.5));
            const double fz = (wave - lc.lateral_pressure[static_cast<std::size_t>(e.id)]) * e.area;
            for (int n : e.nodes)
                lc.nodal_forces[static_cast<std::size_t>(2 * n + 1)] += 0.25 * fz;
        }
    }

    m.monitored_node = spec.monitored_node >= 0 ? spec.monitored_node : node_id(0, nx / 2);
    if (static_cast<std::size_t>(m.monitored_node) >= m.nodes.size())
        throw ConfigError("monitored node out of range");
    return m;
}

inline void from_json(const nlohmann::json& j, GroupSpec& g)
{
    j.at("name").get_to(g.name);
    j.at("selectors").get_to(g.selectors);
    j.at("domain").get_to(g.domain);
    g.default_value = j.value("default", g.domain.empty() ? 0.0 : g.domain.front());
}

inline void to_json(nlohmann::json& j, const GroupSpec& g)
{
    j = nlohmann::json{{"name", g.name}, {"selectors", g.selectors}, {"domain", g.domain}, {"default", g.default_value}};
}

/// Reads the documented key set: grid, panels, regions, loads, monitored_node, material.
inline ModelSpec model_spec_from_json(const nlohmann::json& j)
{
    ModelSpec s;
    try {
        const auto& grid = j.at("grid");
        s.nx = grid.at("nx").get<int>();
        s.nz = grid.at("nz").get<int>();
        s.dx = grid.value("dx", s.dx);
        s.dz = grid.value("dz", s.dz);
        const auto& panels = j.at("panels");
        s.bottom_rows = panels.value("bottom_rows", s.bottom_rows);
        s.inner_bottom_rows = panels.value("inner_bottom_rows", s.inner_bottom_rows);
        s.deck_rows = panels.value("deck_rows", std::vector<int>{});
        s.external_bulkhead_cols = panels.value("external_bulkhead_cols", std::vector<int>{});
        s.internal_bulkhead_cols = panels.value("internal_bulkhead_cols", std::vector<int>{});
        s.superstructure_row = panels.value("superstructure_row", s.superstructure_row);
        s.patch_nx = panels.value("patch_nx", s.patch_nx);
        s.patch_nz = panels.value("patch_nz", s.patch_nz);
        s.panel_width_b = panels.value("panel_width_b", s.panel_width_b);
        s.panel_length_a = panels.value("panel_length_a", s.panel_length_a);
        s.fixed_thickness = panels.value("fixed_thickness", s.fixed_thickness);
        s.groups = j.at("regions").get<std::vector<GroupSpec>>();
        if (j.contains("loads")) {
            const auto& l = j["loads"];
            s.end_moment = l.value("end_moment", 0.0);
            s.wave_load = l.value("wave_load", 0.0);
            s.pressure = l.value("pressure", 0.0);
        }
        s.monitored_node = j.value("monitored_node", -1);
        if (j.contains("material")) {
            const auto& mat = j["material"];
            s.material.youngs_modulus = mat.value("E", s.material.youngs_modulus);
            s.material.poisson = mat.value("nu", s.material.poisson);
            s.material.density = mat.value("density", s.material.density);
        }
        if (j.contains("fixed_mass")) {
            s.extra_fixed_mass = j["fixed_mass"].value("mass", 0.0);
            s.extra_fixed_vcg = j["fixed_mass"].value("vcg", 0.0);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid model spec: ") + e.what());
    }
    return s;
}

inline nlohmann::json model_spec_to_json(const ModelSpec& s)
{
    nlohmann::json j;
    j["grid"] = {{"nx", s.nx}, {"nz", s.nz}, {"dx", s.dx}, {"dz", s.dz}};
    j["panels"] = {{"bottom_rows", s.bottom_rows},
                   {"inner_bottom_rows", s.inner_bottom_rows},
                   {"deck_rows", s.deck_rows},
                   {"external_bulkhead_cols", s.external_bulkhead_cols},
                   {"internal_bulkhead_cols", s.internal_bulkhead_cols},
                   {"superstructure_row", s.superstructure_row},
                   {"patch_nx", s.patch_nx},
                   {"patch_nz", s.patch_nz},
                   {"panel_width_b", s.panel_width_b},
                   {"panel_length_a", s.panel_length_a},
                   {"fixed_thickness", s.fixed_thickness}};
    j["regions"] = s.groups;
    j["loads"] = {{"end_moment", s.end_moment}, {"wave_load", s.wave_load}, {"pressure", s.pressure}};
    j["monitored_node"] = s.monitored_node;
    j["material"] = {{"E", s.material.youngs_modulus}, {"nu", s.material.poisson}, {"density", s.material.density}};
    j["fixed_mass"] = {{"mass", s.extra_fixed_mass}, {"vcg", s.extra_fixed_vcg}};
    return j;
}

} // namespace hullopt
