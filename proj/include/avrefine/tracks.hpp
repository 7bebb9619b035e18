#ifndef AVREFINE_TRACKS_HPP
#define AVREFINE_TRACKS_HPP

#include "avrefine/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

namespace avrefine
{

struct Box
{
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double area() const { return (x2 - x1) * (y2 - y1); }
    bool valid() const { return x1 < x2 && y1 < y2; }
    bool operator==(const Box&) const = default;
};

inline double iou(const Box& a, const Box& b)
{
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0 || h <= 0) return 0.0;
    const double inter = w * h;
    return inter / (a.area() + b.area() - inter);
}

struct FaceDetection
{
    int frame = 0;
    Box box;
    double detector_confidence = 1.0;

    bool operator==(const FaceDetection&) const = default;
};

struct TrackEntry
{
    int frame = 0;
    Box box;
    int detection_index = 0; // position within that frame's detection list; locates the crop

    bool operator==(const TrackEntry&) const = default;
};

struct FaceTrack
{
    int track_id = 0;
    std::vector<TrackEntry> entries;
    int cut_id = -1;

    int first_frame() const { return entries.front().frame; }
    int last_frame() const { return entries.back().frame; }
    bool operator==(const FaceTrack&) const = default;
};

inline constexpr double default_link_threshold = 0.33;

/// Chains detections of consecutive frames into tracks. Outer index is the
/// frame number. Per frame pair, candidate links with IoU > theta are taken
/// greedily in descending IoU order, each face used at most once; leftover faces
/// start new tracks. Track ids follow (first frame, x1, y1, detection index).
inline std::vector<FaceTrack> link_detections(const std::vector<std::vector<FaceDetection>>& per_frame, double theta)
{
    if (!(theta > 0 && theta < 1)) throw RangeError("link_detections: theta must lie in (0, 1)");

    std::vector<FaceTrack> tracks;
    // track index open at the previous frame, per detection index of that frame
    std::vector<std::size_t> open_prev;

    struct Candidate
    {
        double iou;
        std::size_t a, b;
    };
    std::vector<Candidate> cands;

    for (std::size_t f = 0; f < per_frame.size(); ++f) {
        const auto& dets = per_frame[f];
        for (const auto& d : dets) {
            if (!d.box.valid())
                throw ValidationError("link_detections: box with non-positive area at frame " + std::to_string(f));
        }
        std::vector<std::size_t> open_now(dets.size(), static_cast<std::size_t>(-1));

        cands.clear();
        if (f > 0) {
            const auto& prev = per_frame[f - 1];
            for (std::size_t a = 0; a < prev.size(); ++a)
                for (std::size_t b = 0; b < dets.size(); ++b)
                    if (double v = iou(prev[a].box, dets[b].box); v > theta) cands.push_back({v, a, b});
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
            if (x.iou != y.iou) return x.iou > y.iou;
            return std::tie(x.a, x.b) < std::tie(y.a, y.b);
        });
        std::vector<bool> used_a(f > 0 ? per_frame[f - 1].size() : 0, false);
        for (const auto& c : cands) {
            if (used_a[c.a] || open_now[c.b] != static_cast<std::size_t>(-1)) continue;
            used_a[c.a] = true;
            open_now[c.b] = open_prev[c.a];
        }
        for (std::size_t b = 0; b < dets.size(); ++b) {
            if (open_now[b] == static_cast<std::size_t>(-1)) {
                open_now[b] = tracks.size();
                tracks.emplace_back();
            }
            tracks[open_now[b]].entries.push_back({static_cast<int>(f), dets[b].box, static_cast<int>(b)});
        }
        open_prev = std::move(open_now);
    }

    std::sort(tracks.begin(), tracks.end(), [](const FaceTrack& x, const FaceTrack& y) {
        const auto& a = x.entries.front();
        const auto& b = y.entries.front();
        return std::tie(a.frame, a.box.x1, a.box.y1, a.detection_index) <
               std::tie(b.frame, b.box.x1, b.box.y1, b.detection_index);
    });
    for (std::size_t i = 0; i < tracks.size(); ++i) tracks[i].track_id = static_cast<int>(i);
    return tracks;
}

// ---------------------------------------------------------------------------
// JSON Lines I/O

inline nlohmann::json detections_line(int frame, const std::vector<FaceDetection>& dets)
{
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& d : dets)
        boxes.push_back({{"x1", d.box.x1}, {"y1", d.box.y1}, {"x2", d.box.x2}, {"y2", d.box.y2},
                         {"conf", d.detector_confidence}});
    return {{"frame", frame}, {"boxes", std::move(boxes)}};
}

inline void write_detections(std::ostream& os, const std::vector<std::vector<FaceDetection>>& per_frame)
{
    for (std::size_t f = 0; f < per_frame.size(); ++f)
        os << detections_line(static_cast<int>(f), per_frame[f]).dump() << '\n';
}

/// Frames absent from the stream are read as empty.
inline std::vector<std::vector<FaceDetection>> read_detections(std::istream& is)
{
    std::vector<std::vector<FaceDetection>> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto j = nlohmann::json::parse(line);
        const int frame = j.at("frame").get<int>();
        if (frame < 0) throw SchemaError("detections line " + std::to_string(lineno) + ": negative frame");
        if (static_cast<std::size_t>(frame) >= out.size()) out.resize(static_cast<std::size_t>(frame) + 1);
        auto& dets = out[static_cast<std::size_t>(frame)];
        if (!dets.empty()) throw SchemaError("detections line " + std::to_string(lineno) + ": duplicate frame");
        for (const auto& b : j.at("boxes")) {
            FaceDetection d;
            d.frame = frame;
            d.box = {b.at("x1").get<double>(), b.at("y1").get<double>(), b.at("x2").get<double>(),
                     b.at("y2").get<double>()};
            d.detector_confidence = b.value("conf", 1.0);
            if (!d.box.valid())
                throw SchemaError("detections line " + std::to_string(lineno) + ": box with non-positive area");
            dets.push_back(d);
        }
    }
    return out;
}

inline nlohmann::json to_json(const FaceTrack& t)
{
    nlohmann::json frames = nlohmann::json::array(), boxes = nlohmann::json::array(),
                   dets = nlohmann::json::array();
    for (const auto& e : t.entries) {
        frames.push_back(e.frame);
        boxes.push_back({e.box.x1, e.box.y1, e.box.x2, e.box.y2});
        dets.push_back(e.detection_index);
    }
    return {{"track_id", t.track_id}, {"frames", frames}, {"boxes", boxes}, {"detections", dets}};
}

inline void write_tracks(std::ostream& os, const std::vector<FaceTrack>& tracks)
{
    for (const auto& t : tracks) os << to_json(t).dump() << '\n';
}

} // namespace avrefine

#endif // AVREFINE_TRACKS_HPP
