#ifndef AVREFINE_TIMELINE_HPP
#define AVREFINE_TIMELINE_HPP

#include "avrefine/meld_schema.hpp"

#include "json.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace avrefine
{

inline constexpr Millis max_silence_ms = 250;
inline constexpr Millis max_clip_ms = 45'000;

inline Millis silence_length(Millis gap_ms) { return std::min(gap_ms, max_silence_ms); }

/// Keeps the head of over-long clips.
inline Millis cap_utterance(Millis seg_source_len_ms) { return std::min(seg_source_len_ms, max_clip_ms); }

/// Episode-time interval of one utterance after clip capping and overlap removal.
struct AdjustedInterval
{
    int utterance_id = 0;
    Millis clip_start_ms = 0; // episode time of the clip's first sample
    Millis start_ms = 0;
    Millis end_ms = 0;
    bool degenerate = false;

    Millis source_start_ms() const { return start_ms - clip_start_ms; }
    Millis source_end_ms() const { return end_ms - clip_start_ms; }
};

/// Raises each utterance's start to the end of the last kept utterance when they
/// overlap. Utterances left empty are flagged degenerate and no longer act as
/// the predecessor. Clips are capped before the comparison.
inline std::vector<AdjustedInterval> resolve_overlaps(const Dialogue& dialogue)
{
    std::vector<AdjustedInterval> out;
    out.reserve(dialogue.utterances.size());
    std::optional<Millis> prev_end;
    for (const auto& u : dialogue.utterances) {
        AdjustedInterval a;
        a.utterance_id = u.utterance_id;
        a.clip_start_ms = u.start_ms;
        a.start_ms = u.start_ms;
        a.end_ms = u.start_ms + cap_utterance(std::max<Millis>(0, u.end_ms - u.start_ms));
        if (prev_end && a.start_ms < *prev_end) a.start_ms = *prev_end;
        a.degenerate = a.start_ms >= a.end_ms;
        if (!a.degenerate) prev_end = a.end_ms;
        out.push_back(a);
    }
    return out;
}

enum class SegmentKind { utterance, silence };

struct TimelineSegment
{
    SegmentKind kind = SegmentKind::utterance;
    std::optional<int> utterance_id;
    Millis source_start_ms = 0;
    Millis source_end_ms = 0;
    Millis global_start_ms = 0;
    Millis global_end_ms = 0;

    Millis length() const { return global_end_ms - global_start_ms; }
    bool operator==(const TimelineSegment&) const = default;
};

struct DialogueTimeline
{
    DialogueKey key;
    std::vector<TimelineSegment> segments;
    Millis total_ms = 0;
    std::vector<int> degenerate; // utterance ids with no audio left

    /// Utterance ids in segment order.
    std::vector<int> utterance_order() const
    {
        std::vector<int> ids;
        for (const auto& s : segments)
            if (s.kind == SegmentKind::utterance) ids.push_back(*s.utterance_id);
        return ids;
    }

    bool operator==(const DialogueTimeline&) const = default;
};

inline DialogueTimeline build_timeline(const Dialogue& dialogue)
{
    DialogueTimeline tl;
    tl.key = dialogue.key;
    Millis cursor = 0;
    std::optional<Millis> prev_end;
    for (const auto& a : resolve_overlaps(dialogue)) {
        if (a.degenerate) {
            tl.degenerate.push_back(a.utterance_id);
            continue;
        }
        if (prev_end) {
            const Millis gap = silence_length(a.start_ms - *prev_end);
            if (gap > 0) {
                tl.segments.push_back({SegmentKind::silence, std::nullopt, 0, gap, cursor, cursor + gap});
                cursor += gap;
            }
        }
        const Millis len = a.end_ms - a.start_ms;
        tl.segments.push_back(
            {SegmentKind::utterance, a.utterance_id, a.source_start_ms(), a.source_end_ms(), cursor, cursor + len});
        cursor += len;
        prev_end = a.end_ms;
    }
    tl.total_ms = cursor;
    return tl;
}

struct Location
{
    std::size_t segment_index = 0;
    std::optional<int> utterance_id; // empty inside silence
    Millis source_offset_ms = 0;
};

/// Maps a dialogue-timeline instant to its segment. Intervals are half-open, so a
/// boundary instant belongs to the later segment.
inline Location locate(const DialogueTimeline& tl, Millis global_ms)
{
    if (global_ms < 0 || global_ms >= tl.total_ms)
        throw RangeError("locate: " + std::to_string(global_ms) + " ms outside [0, " + std::to_string(tl.total_ms) +
                         ")");
    auto it = std::upper_bound(tl.segments.begin(), tl.segments.end(), global_ms,
                               [](Millis t, const TimelineSegment& s) { return t < s.global_start_ms; });
    const auto idx = static_cast<std::size_t>(std::distance(tl.segments.begin(), it) - 1);
    const auto& seg = tl.segments[idx];
    return {idx, seg.utterance_id, seg.source_start_ms + (global_ms - seg.global_start_ms)};
}

inline nlohmann::json to_json(const DialogueTimeline& tl)
{
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : tl.segments) {
        segs.push_back({{"kind", s.kind == SegmentKind::utterance ? "utterance" : "silence"},
                        {"utterance_id", s.utterance_id ? nlohmann::json(*s.utterance_id) : nlohmann::json(nullptr)},
                        {"source_start_ms", s.source_start_ms},
                        {"source_end_ms", s.source_end_ms},
                        {"global_start_ms", s.global_start_ms},
                        {"global_end_ms", s.global_end_ms}});
    }
    return {{"split", to_string(tl.key.split)},
            {"dialogue_id", tl.key.dialogue_id},
            {"total_ms", tl.total_ms},
            {"segments", std::move(segs)},
            {"degenerate", tl.degenerate}};
}

inline DialogueTimeline timeline_from_json(const nlohmann::json& j)
{
    DialogueTimeline tl;
    auto split = split_from_string(j.at("split").get<std::string>());
    if (!split) throw SchemaError("timeline: unknown split");
    tl.key = {*split, j.at("dialogue_id").get<int>()};
    tl.total_ms = j.at("total_ms").get<Millis>();
    for (const auto& s : j.at("segments")) {
        TimelineSegment seg;
        seg.kind = s.at("kind").get<std::string>() == "utterance" ? SegmentKind::utterance : SegmentKind::silence;
        if (!s.at("utterance_id").is_null()) seg.utterance_id = s["utterance_id"].get<int>();
        seg.source_start_ms = s.at("source_start_ms").get<Millis>();
        seg.source_end_ms = s.at("source_end_ms").get<Millis>();
        seg.global_start_ms = s.at("global_start_ms").get<Millis>();
        seg.global_end_ms = s.at("global_end_ms").get<Millis>();
        tl.segments.push_back(seg);
    }
    tl.degenerate = j.value("degenerate", std::vector<int>{});
    return tl;
}

} // namespace avrefine

#endif // AVREFINE_TIMELINE_HPP
