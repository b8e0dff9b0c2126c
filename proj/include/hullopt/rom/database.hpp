#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hullopt/common.hpp"
#include "hullopt/criteria.hpp"
#include "hullopt/hull/fem.hpp"

namespace hullopt {

enum class Phase { InitialSample, MooInfill, Bo, Pds, ReparamSample };

inline std::string phase_name(Phase p)
{
    switch (p) {
    case Phase::InitialSample: return "initial-sample";
    case Phase::MooInfill: return "moo-infill";
    case Phase::Bo: return "bo";
    case Phase::Pds: return "pds";
    case Phase::ReparamSample: return "reparam-sample";
    }
    return "?";
}

inline Phase phase_from_name(const std::string& s)
{
    for (auto p : {Phase::InitialSample, Phase::MooInfill, Phase::Bo, Phase::Pds, Phase::ReparamSample})
        if (phase_name(p) == s)
            return p;
    throw DataError("unknown phase tag '" + s + "'");
}

struct DbEntry {
    /// Configuration in the current parameter space.
    Configuration config;
    std::shared_ptr<const StressSnapshot> snapshot;
    QoiVector qoi;
    double f = 0.0;
    Phase phase = Phase::InitialSample;
};

/// High-fidelity results with unique configurations.
class SnapshotDatabase {
public:
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const DbEntry& operator[](std::size_t i) const { return entries_.at(i); }
    const std::vector<DbEntry>& entries() const noexcept { return entries_; }

    bool contains(const Configuration& x) const { return index_.count(x) != 0; }

    /// Index of the entry with configuration x, or -1.
    long find(const Configuration& x) const
    {
        auto it = index_.find(x);
        return it == index_.end() ? -1 : static_cast<long>(it->second);
    }

    void add(DbEntry e)
    {
        if (!e.snapshot)
            throw DataError("database entry without snapshot");
        if (!index_.emplace(e.config, entries_.size()).second)
            throw DataError("configuration already in the database");
        entries_.push_back(std::move(e));
    }

    std::vector<Configuration> configs() const
    {
        std::vector<Configuration> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_)
            out.push_back(e.config);
        return out;
    }

    /// Same snapshots with configurations lifted to a refined space.
    SnapshotDatabase lifted(const ParameterSpace& space) const
    {
        SnapshotDatabase db;
        for (const auto& e : entries_) {
            DbEntry n = e;
            n.config = space.lift(e.config);
            db.add(std::move(n));
        }
        return db;
    }

private:
    std::vector<DbEntry> entries_;
    std::map<Configuration, std::size_t> index_;
};

} // namespace hullopt
