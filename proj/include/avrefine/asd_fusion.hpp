#ifndef AVREFINE_ASD_FUSION_HPP
#define AVREFINE_ASD_FUSION_HPP

// Active speaker selection from per-track ASD scores: multi-block score fusion,
// camera-cut grouping, conflict detection and elimination, and assembly of the
// speaker's face sequence.

#include "avrefine/error.hpp"
#include "avrefine/tracks.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

namespace avrefine
{

/// Block lengths (video frames) the ASD scorer is run with.
inline constexpr std::array<int, 6> asd_block_lengths{25, 50, 75, 100, 125, 150};

/// Block length -> per-frame scores. NaN marks a frame the scorer did not cover.
using PhiScores = std::map<int, std::vector<double>>;

/// Per-frame mean over the block lengths present at that frame.
inline std::vector<double> fuse_scores(const PhiScores& per_phi)
{
    if (per_phi.empty()) throw ValidationError("fuse_scores: no score arrays");
    const std::size_t n = per_phi.begin()->second.size();
    for (const auto& [phi, arr] : per_phi)
        if (arr.size() != n)
            throw ValidationError("fuse_scores: array for phi=" + std::to_string(phi) + " has length " +
                                  std::to_string(arr.size()) + ", expected " + std::to_string(n));
    std::vector<double> fused(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        int count = 0;
        for (const auto& [phi, arr] : per_phi) {
            if (std::isnan(arr[i])) continue;
            sum += arr[i];
            ++count;
        }
        if (count > 0) fused[i] = sum / count;
    }
    return fused;
}

/// Speaking iff the fused score is strictly positive.
inline std::vector<bool> speaking_mask(std::span<const double> fused)
{
    std::vector<bool> mask(fused.size());
    for (std::size_t i = 0; i < fused.size(); ++i) mask[i] = fused[i] > 0.0;
    return mask;
}

struct ScoredTrack
{
    int track_id = 0;
    int source_track_id = 0; // id before cut splitting
    int cut_id = 0;
    std::vector<TrackEntry> entries;
    std::vector<double> fused;
    std::vector<bool> mask;

    int first_frame() const { return entries.front().frame; }
    int last_frame() const { return entries.back().frame; }
    int speaking_count() const { return static_cast<int>(std::count(mask.begin(), mask.end(), true)); }
};

/// Attaches fused scores to tracks. Every track needs scores of its own length.
inline std::vector<ScoredTrack> score_tracks(const std::vector<FaceTrack>& tracks, const std::map<int, PhiScores>& scores)
{
    std::vector<ScoredTrack> out;
    out.reserve(tracks.size());
    for (const auto& t : tracks) {
        auto it = scores.find(t.track_id);
        if (it == scores.end()) throw ValidationError("track " + std::to_string(t.track_id) + ": no ASD scores");
        for (const auto& [phi, arr] : it->second)
            if (arr.size() != t.entries.size())
                throw ValidationError("track " + std::to_string(t.track_id) + ": phi=" + std::to_string(phi) +
                                      " has " + std::to_string(arr.size()) + " scores for " +
                                      std::to_string(t.entries.size()) + " faces");
        ScoredTrack st;
        st.track_id = st.source_track_id = t.track_id;
        st.entries = t.entries;
        st.fused = fuse_scores(it->second);
        st.mask = speaking_mask(st.fused);
        out.push_back(std::move(st));
    }
    for (const auto& [id, s] : scores) {
        if (std::none_of(tracks.begin(), tracks.end(), [&](const FaceTrack& t) { return t.track_id == id; }))
            throw ValidationError("track " + std::to_string(id) + ": scores reference an unknown track");
    }
    return out;
}

struct CutInterval
{
    int start_frame = 0;
    int end_frame = 0; // inclusive
};

/// First frames of every shot implied by the intervals. Frames outside all
/// intervals form shots of their own.
inline std::vector<int> cut_boundaries(const std::vector<CutInterval>& cuts)
{
    std::set<int> b;
    for (const auto& c : cuts) {
        if (c.end_frame < c.start_frame) throw ValidationError("cut interval ends before it starts");
        if (c.start_frame > 0) b.insert(c.start_frame);
        b.insert(c.end_frame + 1);
    }
    return {b.begin(), b.end()};
}

/// Shot boundaries inferred from the tracks themselves: frame f starts a new
/// shot when every track visible at f-1 ends there and some track starts at f.
inline std::vector<int> infer_cut_boundaries(const std::vector<FaceTrack>& tracks)
{
    std::map<int, int> alive_at, ending_at, starting_at;
    for (const auto& t : tracks) {
        for (const auto& e : t.entries) ++alive_at[e.frame];
        ++ending_at[t.last_frame()];
        ++starting_at[t.first_frame()];
    }
    std::vector<int> out;
    for (const auto& [f, n] : starting_at) {
        if (f == 0) continue;
        auto alive = alive_at.find(f - 1);
        auto ending = ending_at.find(f - 1);
        if (alive != alive_at.end() && ending != ending_at.end() && alive->second == ending->second) out.push_back(f);
    }
    return out;
}

inline int cut_of(std::span<const int> boundaries, int frame)
{
    return static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), frame) - boundaries.begin());
}

/// Splits tracks at shot boundaries, assigns cut ids and renumbers tracks
/// sequentially in (source id, piece) order.
inline std::vector<ScoredTrack> assign_cuts(const std::vector<ScoredTrack>& tracks, std::span<const int> boundaries)
{
    std::vector<ScoredTrack> out;
    for (const auto& t : tracks) {
        std::size_t begin = 0;
        while (begin < t.entries.size()) {
            const int cut = cut_of(boundaries, t.entries[begin].frame);
            std::size_t end = begin;
            while (end < t.entries.size() && cut_of(boundaries, t.entries[end].frame) == cut) ++end;
            ScoredTrack piece;
            piece.source_track_id = t.source_track_id;
            piece.cut_id = cut;
            piece.entries.assign(t.entries.begin() + static_cast<std::ptrdiff_t>(begin),
                                 t.entries.begin() + static_cast<std::ptrdiff_t>(end));
            piece.fused.assign(t.fused.begin() + static_cast<std::ptrdiff_t>(begin),
                               t.fused.begin() + static_cast<std::ptrdiff_t>(end));
            piece.mask.assign(t.mask.begin() + static_cast<std::ptrdiff_t>(begin),
                              t.mask.begin() + static_cast<std::ptrdiff_t>(end));
            out.push_back(std::move(piece));
            begin = end;
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].track_id = static_cast<int>(i);
    return out;
}

struct CutGroup
{
    int cut_id = 0;
    std::vector<int> members;                // ascending track ids
    std::vector<std::pair<int, int>> edges;  // (smaller id, larger id), ascending
};

inline bool tracks_conflict(const ScoredTrack& a, const ScoredTrack& b)
{
    if (a.cut_id != b.cut_id) return false;
    const bool share_frame = std::max(a.first_frame(), b.first_frame()) <= std::min(a.last_frame(), b.last_frame());
    return share_frame && a.speaking_count() > 0 && b.speaking_count() > 0;
}

/// Connected components of the conflict graph, per cut. Tracks without any
/// conflict appear in no group.
inline std::vector<CutGroup> detect_conflicts(const std::vector<ScoredTrack>& tracks)
{
    const std::size_t n = tracks.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    const std::function<std::size_t(std::size_t)> root = [&](std::size_t x) {
        return parent[x] == x ? x : parent[x] = root(parent[x]);
    };
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (tracks_conflict(tracks[i], tracks[j])) {
                edges.emplace_back(i, j);
                parent[root(i)] = root(j);
            }

    std::map<std::size_t, CutGroup> groups;
    for (const auto& [i, j] : edges) {
        auto& g = groups[root(i)];
        g.cut_id = tracks[i].cut_id;
        const int a = std::min(tracks[i].track_id, tracks[j].track_id);
        const int b = std::max(tracks[i].track_id, tracks[j].track_id);
        g.edges.emplace_back(a, b);
        g.members.push_back(a);
        g.members.push_back(b);
    }
    std::vector<CutGroup> out;
    for (auto& [r, g] : groups) {
        std::sort(g.members.begin(), g.members.end());
        g.members.erase(std::unique(g.members.begin(), g.members.end()), g.members.end());
        std::sort(g.edges.begin(), g.edges.end());
        out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end(), [](const CutGroup& a, const CutGroup& b) {
        return std::tie(a.cut_id, a.members.front()) < std::tie(b.cut_id, b.members.front());
    });
    return out;
}

inline constexpr std::size_t default_exact_group_limit = 20;

/// Conflict-free subset of a group maximising total speaking faces, then with
/// fewest tracks, then with the lexicographically smallest id tuple. Exhaustive
/// over independent sets up to `exact_limit` members, greedy beyond.
inline std::vector<int> resolve_group(const CutGroup& group, const std::map<int, int>& speaking_counts,
                                      std::size_t exact_limit = default_exact_group_limit)
{
    const auto& ids = group.members;
    const std::size_t n = ids.size();
    const auto count_of = [&](int id) {
        auto it = speaking_counts.find(id);
        return it == speaking_counts.end() ? 0 : it->second;
    };
    const auto index_of = [&](int id) {
        return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    };
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (const auto& [a, b] : group.edges) {
        const auto i = index_of(a), j = index_of(b);
        if (i >= n || j >= n || ids[i] != a || ids[j] != b) throw ValidationError("resolve_group: edge outside group");
        adj[i][j] = adj[j][i] = true;
    }

    if (n > exact_limit) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return count_of(ids[a]) > count_of(ids[b]); });
        std::vector<std::size_t> chosen;
        for (std::size_t i : order) {
            if (count_of(ids[i]) <= 0) break;
            if (std::none_of(chosen.begin(), chosen.end(), [&](std::size_t c) { return adj[i][c]; }))
                chosen.push_back(i);
        }
        std::vector<int> out;
        for (std::size_t c : chosen) out.push_back(ids[c]);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<std::size_t> current, best;
    long long best_sum = -1;
    long long sum = 0;
    const auto better = [&]() {
        if (sum != best_sum) return sum > best_sum;
        if (current.size() != best.size()) return current.size() < best.size();
        return std::lexicographical_compare(current.begin(), current.end(), best.begin(), best.end());
    };
    // Enumerates every independent set in ascending index order.
    const std::function<void(std::size_t)> search = [&](std::size_t i) {
        if (i == n) {
            if (better()) {
                best = current;
                best_sum = sum;
            }
            return;
        }
        if (std::none_of(current.begin(), current.end(), [&](std::size_t c) { return adj[i][c]; })) {
            current.push_back(i);
            sum += count_of(ids[i]);
            search(i + 1);
            sum -= count_of(ids[i]);
            current.pop_back();
        }
        search(i + 1);
    };
    search(0);

    std::vector<int> out;
    for (std::size_t i : best) out.push_back(ids[i]);
    return out;
}

struct FaceRef
{
    int frame = 0;
    Box box;
    int track_id = 0;
    int source_track_id = 0;
    int detection_index = 0;
    double fused = 0;
    bool speaking = false;
};

struct ActiveSpeakerResult
{
    std::vector<int> retained_track_ids;
    std::vector<FaceRef> faces; // strictly increasing frames

    bool empty() const { return faces.empty(); }
};

/// Merges retained tracks in frame order. Where two tracks share a frame, a
/// positive fused score wins, then the higher score, then the lower track id.
inline ActiveSpeakerResult assemble_active_speaker(const std::vector<ScoredTrack>& retained)
{
    ActiveSpeakerResult res;
    for (const auto& t : retained) {
        res.retained_track_ids.push_back(t.track_id);
        for (std::size_t i = 0; i < t.entries.size(); ++i) {
            const auto& e = t.entries[i];
            res.faces.push_back({e.frame, e.box, t.track_id, t.source_track_id, e.detection_index, t.fused[i],
                                 t.mask[i]});
        }
    }
    std::sort(res.retained_track_ids.begin(), res.retained_track_ids.end());
    const auto rank = [](const FaceRef& f) {
        return std::make_tuple(f.frame, !(f.fused > 0), std::isnan(f.fused) ? std::numeric_limits<double>::infinity()
                                                                             : -f.fused,
                               f.track_id);
    };
    std::sort(res.faces.begin(), res.faces.end(), [&](const FaceRef& a, const FaceRef& b) { return rank(a) < rank(b); });
    res.faces.erase(std::unique(res.faces.begin(), res.faces.end(),
                                [](const FaceRef& a, const FaceRef& b) { return a.frame == b.frame; }),
                    res.faces.end());
    return res;
}

/// Full selection over scored tracks that already carry cut ids: silent tracks
/// are discarded, conflict-free speaking tracks kept, and each conflict group
/// reduced by resolve_group.
inline ActiveSpeakerResult select_active_speaker(const std::vector<ScoredTrack>& tracks,
                                                 std::size_t exact_limit = default_exact_group_limit)
{
    const auto groups = detect_conflicts(tracks);
    std::set<int> in_group;
    for (const auto& g : groups) in_group.insert(g.members.begin(), g.members.end());
    std::map<int, int> counts;
    for (const auto& t : tracks) counts[t.track_id] = t.speaking_count();

    std::set<int> keep;
    for (const auto& t : tracks)
        if (t.speaking_count() > 0 && !in_group.count(t.track_id)) keep.insert(t.track_id);
    for (const auto& g : groups)
        for (int id : resolve_group(g, counts, exact_limit)) keep.insert(id);

    std::vector<ScoredTrack> retained;
    for (const auto& t : tracks)
        if (keep.count(t.track_id)) retained.push_back(t);
    return assemble_active_speaker(retained);
}

// ---------------------------------------------------------------------------
// I/O

inline std::map<int, PhiScores> read_scores(std::istream& is)
{
    std::map<int, PhiScores> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line);
        const int track = j.at("track_id").get<int>();
        const int phi = j.at("phi").get<int>();
        if (phi <= 0) throw SchemaError("scores line " + std::to_string(lineno) + ": phi must be positive");
        std::vector<double> arr;
        for (const auto& v : j.at("scores"))
            arr.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
        if (!out[track].emplace(phi, std::move(arr)).second)
            throw SchemaError("scores line " + std::to_string(lineno) + ": duplicate (track, phi)");
    }
    return out;
}

inline void write_scores(std::ostream& os, const std::map<int, PhiScores>& scores)
{
    for (const auto& [track, per_phi] : scores)
        for (const auto& [phi, arr] : per_phi) {
            nlohmann::json a = nlohmann::json::array();
            for (double v : arr) a.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
            os << nlohmann::json{{"track_id", track}, {"phi", phi}, {"scores", std::move(a)}}.dump() << '\n';
        }
}

inline std::vector<CutInterval> cuts_from_json(const nlohmann::json& j)
{
    if (!j.is_array()) throw SchemaError("cuts: expected a JSON list");
    std::vector<CutInterval> out;
    for (const auto& c : j) out.push_back({c.at("start_frame").get<int>(), c.at("end_frame").get<int>()});
    return out;
}

inline nlohmann::json to_json(const std::vector<CutInterval>& cuts)
{
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cuts) j.push_back({{"start_frame", c.start_frame}, {"end_frame", c.end_frame}});
    return j;
}

} // namespace avrefine

#endif // AVREFINE_ASD_FUSION_HPP
