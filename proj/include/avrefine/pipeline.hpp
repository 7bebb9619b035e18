#ifndef AVREFINE_PIPELINE_HPP
#define AVREFINE_PIPELINE_HPP

// End-to-end stages. Each stage reads and writes documented files so the
// model adapters and this core compose through formats only:
//
//   realign   records CSV + posteriors  -> timelines, edit decision list (EDL)
//   localise  detections (+ ASD scores) -> tracks / active speaker result
//   manifest  EDL + localisation results -> manifest JSON Lines + metadata
//   stats     manifest                   -> retention tables

#include "avrefine/asd_fusion.hpp"
#include "avrefine/ctcseg.hpp"
#include "avrefine/meld_schema.hpp"
#include "avrefine/parallel.hpp"
#include "avrefine/timeline.hpp"
#include "avrefine/tracks.hpp"
#include "avrefine/transcript.hpp"

#include "json.hpp"

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef AVREFINE_VERSION
#define AVREFINE_VERSION "0.0.0"
#endif

namespace avrefine
{

inline constexpr const char* tool_version = AVREFINE_VERSION;

struct RunConfig
{
    double theta = default_link_threshold;
    Millis min_span_ms = default_min_span_ms;
    double min_confidence = default_min_confidence;
    bool cut_fallback = true;
    std::size_t exact_group_limit = default_exact_group_limit;
    unsigned jobs = 1;

    void validate() const
    {
        if (!(theta > 0 && theta < 1)) throw RangeError("config: theta must lie in (0, 1)");
        if (min_span_ms < 0) throw RangeError("config: min_span_ms must be >= 0");
    }
};

inline nlohmann::json to_json(const RunConfig& c)
{
    return {{"theta", c.theta},
            {"min_span_ms", c.min_span_ms},
            {"min_confidence", c.min_confidence},
            {"cut_fallback", c.cut_fallback},
            {"exact_group_limit", c.exact_group_limit}};
}

enum class EntryStatus { aligned, dropped_short, dropped_low_confidence, degenerate, no_active_speaker };

inline constexpr std::array<std::string_view, 5> entry_status_names{
    "aligned", "dropped_short", "dropped_low_confidence", "degenerate", "no_active_speaker"};

inline std::string_view to_string(EntryStatus s) { return entry_status_names[static_cast<int>(s)]; }

inline EntryStatus entry_status_from_string(std::string_view s)
{
    auto it = std::find(entry_status_names.begin(), entry_status_names.end(), s);
    if (it == entry_status_names.end()) throw SchemaError("unknown status '" + std::string(s) + "'");
    return static_cast<EntryStatus>(it - entry_status_names.begin());
}

inline EntryStatus from_span_status(SpanStatus s)
{
    switch (s) {
    case SpanStatus::aligned: return EntryStatus::aligned;
    case SpanStatus::dropped_short: return EntryStatus::dropped_short;
    case SpanStatus::dropped_low_confidence: return EntryStatus::dropped_low_confidence;
    case SpanStatus::degenerate: return EntryStatus::degenerate;
    }
    return EntryStatus::degenerate;
}

/// Cut point in a source clip.
struct ClipPoint
{
    int utterance_id = 0;
    Millis offset_ms = 0;

    bool operator==(const ClipPoint&) const = default;
};

struct EdlRow
{
    UtteranceKey key;
    int timeline_dialogue_id = 0;
    std::string speaker;
    Emotion emotion = Emotion::neutral;
    EntryStatus status = EntryStatus::degenerate;
    std::string reason;
    std::optional<Millis> global_start_ms;
    std::optional<Millis> global_end_ms;
    std::optional<double> confidence;
    std::optional<ClipPoint> start; // aligned rows only
    std::optional<ClipPoint> end;   // exclusive
};

inline nlohmann::json to_json(const EdlRow& r)
{
    nlohmann::json j{{"split", to_string(r.key.split)},
                     {"dialogue_id", r.key.dialogue_id},
                     {"utterance_id", r.key.utterance_id},
                     {"timeline_dialogue_id", r.timeline_dialogue_id},
                     {"speaker", r.speaker},
                     {"emotion", to_string(r.emotion)},
                     {"status", to_string(r.status)}};
    if (!r.reason.empty()) j["reason"] = r.reason;
    if (r.global_start_ms) j["global_start_ms"] = *r.global_start_ms;
    if (r.global_end_ms) j["global_end_ms"] = *r.global_end_ms;
    if (r.confidence) j["confidence"] = *r.confidence;
    if (r.start) j["start"] = {{"utterance_id", r.start->utterance_id}, {"offset_ms", r.start->offset_ms}};
    if (r.end) j["end"] = {{"utterance_id", r.end->utterance_id}, {"offset_ms", r.end->offset_ms}};
    return j;
}

inline EdlRow edl_row_from_json(const nlohmann::json& j)
{
    EdlRow r;
    auto split = split_from_string(j.at("split").get<std::string>());
    if (!split) throw SchemaError("edl: unknown split");
    r.key = {*split, j.at("dialogue_id").get<int>(), j.at("utterance_id").get<int>()};
    r.timeline_dialogue_id = j.value("timeline_dialogue_id", r.key.dialogue_id);
    r.speaker = j.value("speaker", std::string{});
    auto emo = emotion_from_string(j.value("emotion", std::string("neutral")));
    if (!emo) throw SchemaError("edl: unknown emotion");
    r.emotion = *emo;
    r.status = entry_status_from_string(j.at("status").get<std::string>());
    r.reason = j.value("reason", std::string{});
    if (j.contains("global_start_ms")) r.global_start_ms = j["global_start_ms"].get<Millis>();
    if (j.contains("global_end_ms")) r.global_end_ms = j["global_end_ms"].get<Millis>();
    if (j.contains("confidence")) r.confidence = j["confidence"].get<double>();
    if (j.contains("start")) r.start = ClipPoint{j["start"].at("utterance_id").get<int>(), j["start"].at("offset_ms").get<Millis>()};
    if (j.contains("end")) r.end = ClipPoint{j["end"].at("utterance_id").get<int>(), j["end"].at("offset_ms").get<Millis>()};
    return r;
}

// ---------------------------------------------------------------------------
// Realignment

/// Clip points for a dialogue-timeline span. Ends falling into silence snap to
/// the adjacent utterance audio.
inline std::pair<ClipPoint, ClipPoint> map_span_to_clips(const DialogueTimeline& tl, Millis start_ms, Millis end_ms)
{
    const auto s = locate(tl, start_ms);
    ClipPoint start;
    if (s.utterance_id) {
        start = {*s.utterance_id, s.source_offset_ms};
    } else {
        const auto& next = tl.segments.at(s.segment_index + 1);
        start = {*next.utterance_id, next.source_start_ms};
    }
    const auto e = locate(tl, end_ms - 1);
    ClipPoint end;
    if (e.utterance_id) {
        end = {*e.utterance_id, e.source_offset_ms + 1};
    } else {
        const auto& prev = tl.segments.at(e.segment_index - 1);
        end = {*prev.utterance_id, prev.source_end_ms};
    }
    return {start, end};
}

struct DialogueRealignment
{
    DialogueTimeline timeline;
    std::vector<EdlRow> rows;
    std::vector<std::string> issues;
    bool fatal = false;
};

inline DialogueRealignment realign_dialogue(const Dialogue& dialogue, const PosteriorMatrix* post,
                                            const Vocabulary& vocab, const RunConfig& config)
{
    DialogueRealignment out;
    out.timeline = build_timeline(dialogue);
    const auto& tl = out.timeline;
    const std::string dkey = dialogue.key.str();

    std::map<int, const UtteranceRecord*> by_id;
    for (const auto& u : dialogue.utterances) by_id[u.utterance_id] = &u;
    std::map<int, EdlRow> rows;
    for (const auto& u : dialogue.utterances) {
        EdlRow r;
        r.key = u.key();
        r.timeline_dialogue_id = dialogue.key.dialogue_id;
        r.speaker = u.speaker;
        r.emotion = u.emotion;
        r.status = EntryStatus::degenerate;
        rows[u.utterance_id] = std::move(r);
    }
    const auto finish = [&] {
        for (const auto& u : dialogue.utterances) out.rows.push_back(std::move(rows[u.utterance_id]));
        return std::move(out);
    };
    const auto fail_all = [&](const std::string& reason) {
        out.fatal = true;
        out.issues.push_back(dkey + ": " + reason);
        for (auto& [id, r] : rows)
            if (r.reason.empty()) r.reason = reason;
    };

    for (int id : tl.degenerate) rows[id].reason = "overlap_swallowed";
    if (tl.segments.empty()) {
        fail_all("no_audio");
        return finish();
    }
    if (!post) {
        fail_all("missing_posteriors");
        return finish();
    }
    if (!(post->vocab == vocab)) {
        fail_all("vocabulary_mismatch");
        return finish();
    }
    const double expected_frames = static_cast<double>(tl.total_ms) / post->frame_duration_ms;
    if (std::abs(expected_frames - post->frames) > 1.0 + 1e-9) {
        std::ostringstream msg;
        msg << dkey << ": posterior frames " << post->frames << " vs timeline " << std::fixed << std::setprecision(1)
            << expected_frames;
        out.issues.push_back(msg.str());
    }

    std::vector<std::pair<int, std::string>> texts;
    for (int id : tl.utterance_order()) texts.emplace_back(id, by_id.at(id)->text);

    ConcatTranscript ct;
    try {
        ct = concat_transcripts(texts, vocab);
    } catch (const ValidationError&) {
        for (int id : tl.utterance_order()) rows[id].reason = "empty_transcript";
        fail_all("empty_transcript");
        return finish();
    }
    for (int id : ct.empty_utterances) rows[id].reason = "empty_transcript";

    const auto tokens = alignment_tokens(ct, vocab);
    const auto expanded = expand_with_blanks(tokens.tokens);
    CharAlignment align;
    try {
        align = viterbi_align(*post, expanded);
    } catch (const InfeasibleAlignment&) {
        fail_all("infeasible_alignment");
        return finish();
    }

    auto spans = filter_spans(utterance_spans(align, ct.bounds, post->frame_duration_ms, tokens.position),
                              config.min_span_ms, config.min_confidence);
    for (auto& span : spans) {
        auto& row = rows[span.utterance_id];
        const Millis start = std::clamp<Millis>(span.global_start_ms, 0, tl.total_ms);
        const Millis end = std::clamp<Millis>(span.global_end_ms, 0, tl.total_ms);
        row.global_start_ms = start;
        row.global_end_ms = end;
        row.confidence = span.confidence;
        row.status = from_span_status(span.status);
        if (start >= end) row.status = EntryStatus::dropped_short;
        if (row.status == EntryStatus::aligned) {
            auto [a, b] = map_span_to_clips(tl, start, end);
            row.start = a;
            row.end = b;
        }
    }
    return finish();
}

struct RealignResult
{
    std::vector<DialogueTimeline> timelines;
    std::vector<EdlRow> rows; // sorted by input key
    std::vector<std::string> issues;
    std::size_t fatal_dialogues = 0;
};

inline RealignResult realign(const std::vector<UtteranceRecord>& records, const OverrideReport& overrides,
                             const std::map<DialogueKey, PosteriorMatrix>& posteriors, const Vocabulary& vocab,
                             const RunConfig& config)
{
    const auto dialogues = group_dialogues(records);
    std::vector<DialogueRealignment> parts(dialogues.size());
    parallel_for(dialogues.size(), config.jobs, [&](std::size_t i) {
        auto it = posteriors.find(dialogues[i].key);
        parts[i] = realign_dialogue(dialogues[i], it == posteriors.end() ? nullptr : &it->second, vocab, config);
    });

    RealignResult out;
    for (auto& p : parts) {
        out.timelines.push_back(std::move(p.timeline));
        for (auto& r : p.rows) out.rows.push_back(std::move(r));
        for (auto& s : p.issues) out.issues.push_back(std::move(s));
        out.fatal_dialogues += p.fatal ? 1 : 0;
    }
    for (const auto& d : overrides.dropped) {
        EdlRow r;
        r.key = d.key();
        r.timeline_dialogue_id = d.dialogue_id;
        r.speaker = d.speaker;
        r.emotion = d.emotion;
        r.status = EntryStatus::degenerate;
        r.reason = "dropped_by_override";
        out.rows.push_back(std::move(r));
    }
    std::sort(out.rows.begin(), out.rows.end(), [](const EdlRow& a, const EdlRow& b) { return a.key < b.key; });
    return out;
}

// ---------------------------------------------------------------------------
// Localisation

struct LocaliseOutcome
{
    std::vector<FaceTrack> tracks;
    std::vector<ScoredTrack> scored; // after cut splitting
    ActiveSpeakerResult result;

    bool has_speaker() const { return !result.empty(); }
};

/// Links detections and, when ASD scores are given, selects the active speaker.
/// Without explicit cuts, shot boundaries are inferred if the config allows.
inline LocaliseOutcome localise(const std::vector<std::vector<FaceDetection>>& detections,
                                const std::map<int, PhiScores>* scores, const std::vector<CutInterval>* cuts,
                                const RunConfig& config)
{
    LocaliseOutcome out;
    out.tracks = link_detections(detections, config.theta);
    if (!scores) return out;
    std::vector<int> boundaries;
    if (cuts)
        boundaries = cut_boundaries(*cuts);
    else if (config.cut_fallback)
        boundaries = infer_cut_boundaries(out.tracks);
    out.scored = assign_cuts(score_tracks(out.tracks, *scores), boundaries);
    out.result = select_active_speaker(out.scored, config.exact_group_limit);
    return out;
}

inline nlohmann::json to_json(const ActiveSpeakerResult& r)
{
    nlohmann::json faces = nlohmann::json::array();
    for (const auto& f : r.faces)
        faces.push_back({{"frame", f.frame},
                         {"track_id", f.track_id},
                         {"source_track_id", f.source_track_id},
                         {"detection", f.detection_index},
                         {"box", {f.box.x1, f.box.y1, f.box.x2, f.box.y2}},
                         {"fused", std::isnan(f.fused) ? nlohmann::json(nullptr) : nlohmann::json(f.fused)},
                         {"speaking", f.speaking}});
    return {{"status", r.empty() ? "no_active_speaker" : "ok"},
            {"retained_track_ids", r.retained_track_ids},
            {"faces", std::move(faces)}};
}

inline ActiveSpeakerResult active_speaker_from_json(const nlohmann::json& j)
{
    ActiveSpeakerResult r;
    r.retained_track_ids = j.value("retained_track_ids", std::vector<int>{});
    for (const auto& f : j.at("faces")) {
        FaceRef ref;
        ref.frame = f.at("frame").get<int>();
        ref.track_id = f.at("track_id").get<int>();
        ref.source_track_id = f.value("source_track_id", ref.track_id);
        ref.detection_index = f.value("detection", 0);
        const auto& b = f.at("box");
        ref.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        ref.fused = f.at("fused").is_null() ? std::numeric_limits<double>::quiet_NaN() : f["fused"].get<double>();
        ref.speaking = f.value("speaking", false);
        r.faces.push_back(ref);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Manifest

struct FacesRef
{
    std::string path;
    int count = 0;
};

struct ManifestEntry
{
    UtteranceKey key;
    EntryStatus status = EntryStatus::degenerate;
    std::string reason;
    std::optional<Millis> realigned_start_ms;
    std::optional<Millis> realigned_end_ms;
    std::optional<std::string> audio_ref;
    std::optional<FacesRef> faces_ref;
    Emotion emotion = Emotion::neutral;
    std::string speaker;
};

/// Relative location of an utterance's media: "<split>/<dia>/<utt>".
inline std::string media_stem(const UtteranceKey& k)
{
    return std::string(to_string(k.split)) + "/" + std::to_string(k.dialogue_id) + "/" + std::to_string(k.utterance_id);
}

/// Joins EDL rows with localisation outcomes (face count per key; absent keys had
/// no localisation run). Aligned rows without a speaker become no_active_speaker.
inline std::vector<ManifestEntry> build_manifest(const std::vector<EdlRow>& edl,
                                                 const std::map<UtteranceKey, int>& face_counts)
{
    std::vector<ManifestEntry> out;
    std::set<UtteranceKey> seen;
    for (const auto& r : edl) {
        if (!seen.insert(r.key).second) throw ValidationError("manifest: duplicate EDL key " + r.key.str());
        ManifestEntry e;
        e.key = r.key;
        e.status = r.status;
        e.reason = r.reason;
        e.realigned_start_ms = r.global_start_ms;
        e.realigned_end_ms = r.global_end_ms;
        e.emotion = r.emotion;
        e.speaker = r.speaker;
        if (r.status == EntryStatus::aligned) {
            e.audio_ref = media_stem(r.key) + ".wav";
            auto it = face_counts.find(r.key);
            if (it == face_counts.end() || it->second == 0) {
                e.status = EntryStatus::no_active_speaker;
                if (it == face_counts.end()) e.reason = "not_localised";
            } else {
                e.faces_ref = FacesRef{media_stem(r.key) + "/", it->second};
            }
        }
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const ManifestEntry& a, const ManifestEntry& b) { return a.key < b.key; });
    return out;
}

inline nlohmann::json to_json(const ManifestEntry& e)
{
    nlohmann::json j{{"split", to_string(e.key.split)},
                     {"dialogue_id", e.key.dialogue_id},
                     {"utterance_id", e.key.utterance_id},
                     {"status", to_string(e.status)}};
    if (!e.reason.empty()) j["reason"] = e.reason;
    j["realigned_start_ms"] = e.realigned_start_ms ? nlohmann::json(*e.realigned_start_ms) : nlohmann::json(nullptr);
    j["realigned_end_ms"] = e.realigned_end_ms ? nlohmann::json(*e.realigned_end_ms) : nlohmann::json(nullptr);
    j["audio"] = e.audio_ref ? nlohmann::json(*e.audio_ref) : nlohmann::json(nullptr);
    j["faces"] = e.faces_ref ? nlohmann::json{{"path", e.faces_ref->path}, {"count", e.faces_ref->count}}
                             : nlohmann::json(nullptr);
    j["emotion"] = to_string(e.emotion);
    j["speaker"] = e.speaker;
    return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j)
{
    ManifestEntry e;
    auto split = split_from_string(j.at("split").get<std::string>());
    if (!split) throw SchemaError("manifest: unknown split");
    e.key = {*split, j.at("dialogue_id").get<int>(), j.at("utterance_id").get<int>()};
    e.status = entry_status_from_string(j.at("status").get<std::string>());
    e.reason = j.value("reason", std::string{});
    if (j.contains("realigned_start_ms") && !j["realigned_start_ms"].is_null())
        e.realigned_start_ms = j["realigned_start_ms"].get<Millis>();
    if (j.contains("realigned_end_ms") && !j["realigned_end_ms"].is_null())
        e.realigned_end_ms = j["realigned_end_ms"].get<Millis>();
    if (j.contains("audio") && !j["audio"].is_null()) e.audio_ref = j["audio"].get<std::string>();
    if (j.contains("faces") && !j["faces"].is_null())
        e.faces_ref = FacesRef{j["faces"].at("path").get<std::string>(), j["faces"].at("count").get<int>()};
    auto emo = emotion_from_string(j.at("emotion").get<std::string>());
    if (!emo) throw SchemaError("manifest: unknown emotion");
    e.emotion = *emo;
    e.speaker = j.value("speaker", std::string{});
    return e;
}

// ---------------------------------------------------------------------------
// Statistics

inline constexpr std::array<std::string_view, 6> main_speakers{"Rachel", "Monica", "Phoebe", "Joey", "Chandler", "Ross"};

struct Tally
{
    long retained = 0;
    long original = 0;

    double retention() const { return original == 0 ? 100.0 : 100.0 * static_cast<double>(retained) / static_cast<double>(original); }
};

struct SplitStats
{
    std::map<Emotion, Tally> by_emotion;
    std::map<std::string, Tally> by_speaker; // main speakers + "others"
    Tally total;
    long dialogues = 0;
    long dialogues_with_loss = 0;
};

struct DatasetStats
{
    std::map<Split, SplitStats> splits;
    Tally overall;
};

inline std::string speaker_bucket(std::string_view speaker)
{
    for (auto s : main_speakers)
        if (s == speaker) return std::string(s);
    return "others";
}

/// Retained means audiovisual data exists (status aligned).
inline DatasetStats compute_stats(const std::vector<ManifestEntry>& manifest)
{
    DatasetStats st;
    std::map<DialogueKey, bool> lossy;
    for (const auto& e : manifest) {
        auto& sp = st.splits[e.key.split];
        const bool kept = e.status == EntryStatus::aligned;
        for (Tally* t : {&sp.by_emotion[e.emotion], &sp.by_speaker[speaker_bucket(e.speaker)], &sp.total, &st.overall}) {
            ++t->original;
            t->retained += kept ? 1 : 0;
        }
        auto [it, inserted] = lossy.emplace(DialogueKey{e.key.split, e.key.dialogue_id}, !kept);
        if (!inserted) it->second = it->second || !kept;
    }
    for (const auto& [k, lost] : lossy) {
        ++st.splits[k.split].dialogues;
        st.splits[k.split].dialogues_with_loss += lost ? 1 : 0;
    }
    return st;
}

inline nlohmann::json to_json(const DatasetStats& st)
{
    const auto tally = [](const Tally& t) {
        return nlohmann::json{{"retained", t.retained}, {"original", t.original}, {"retention_pct", t.retention()}};
    };
    nlohmann::json splits = nlohmann::json::object();
    for (const auto& [split, sp] : st.splits) {
        nlohmann::json emo = nlohmann::json::object(), spk = nlohmann::json::object();
        for (const auto& [e, t] : sp.by_emotion) emo[std::string(to_string(e))] = tally(t);
        for (const auto& [s, t] : sp.by_speaker) spk[s] = tally(t);
        splits[std::string(to_string(split))] = {
            {"emotion", emo},
            {"speaker", spk},
            {"total", tally(sp.total)},
            {"dialogues", sp.dialogues},
            {"dialogues_with_loss", sp.dialogues_with_loss},
            {"dialogues_with_loss_pct",
             sp.dialogues == 0 ? 0.0 : 100.0 * static_cast<double>(sp.dialogues_with_loss) / static_cast<double>(sp.dialogues)}};
    }
    return {{"splits", splits}, {"overall", tally(st.overall)}};
}

/// Text tables in "retained (original)" form, one column per split plus total.
inline std::string render_stats(const DatasetStats& st)
{
    std::ostringstream os;
    std::vector<Split> splits;
    for (const auto& [s, _] : st.splits) splits.push_back(s);

    const auto cell = [](const Tally& t) { return std::to_string(t.retained) + " (" + std::to_string(t.original) + ")"; };
    const auto table = [&](const std::string& title, const std::vector<std::string>& labels, auto&& lookup) {
        os << std::left << std::setw(10) << title;
        for (Split s : splits) os << std::setw(16) << to_string(s);
        os << std::setw(16) << "Total" << '\n';
        for (const auto& label : labels) {
            Tally sum;
            os << std::setw(10) << label;
            for (Split s : splits) {
                const Tally t = lookup(st.splits.at(s), label);
                sum.retained += t.retained;
                sum.original += t.original;
                os << std::setw(16) << cell(t);
            }
            os << std::setw(16) << cell(sum) << '\n';
        }
        os << std::setw(10) << "";
        for (Split s : splits) os << std::setw(16) << cell(st.splits.at(s).total);
        os << std::setw(16) << cell(st.overall) << "\n\n";
    };

    std::vector<std::string> emotions;
    for (Emotion e : all_emotions) emotions.emplace_back(to_string(e));
    table("Emotion", emotions, [](const SplitStats& sp, const std::string& label) {
        auto it = sp.by_emotion.find(*emotion_from_string(label));
        return it == sp.by_emotion.end() ? Tally{} : it->second;
    });
    std::vector<std::string> speakers(main_speakers.begin(), main_speakers.end());
    speakers.emplace_back("others");
    table("Speaker", speakers, [](const SplitStats& sp, const std::string& label) {
        auto it = sp.by_speaker.find(label);
        return it == sp.by_speaker.end() ? Tally{} : it->second;
    });

    os << std::fixed << std::setprecision(2);
    for (Split s : splits) {
        const auto& sp = st.splits.at(s);
        os << to_string(s) << ": retention " << sp.total.retention() << "%, dialogues with loss "
           << sp.dialogues_with_loss << " of " << sp.dialogues << " ("
           << (sp.dialogues == 0 ? 0.0 : 100.0 * static_cast<double>(sp.dialogues_with_loss) / static_cast<double>(sp.dialogues))
           << "%)\n";
    }
    os << "overall: retention " << st.overall.retention() << "%\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// File helpers

namespace fs = std::filesystem;

inline std::string read_text_file(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot open " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline nlohmann::json read_json_file(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

inline void write_text_file(const fs::path& p, const std::string& content)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    os << content;
    if (!os) throw Error("write failed: " + p.string());
}

template <class Range>
std::string to_json_lines(const Range& items)
{
    std::string out;
    for (const auto& item : items) {
        out += to_json(item).dump();
        out += '\n';
    }
    return out;
}

template <class T, class F>
std::vector<T> read_json_lines(const fs::path& p, F&& parse)
{
    std::vector<T> out;
    std::istringstream is(read_text_file(p));
    std::string line;
    while (std::getline(is, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(parse(nlohmann::json::parse(line)));
    return out;
}

inline PosteriorMatrix load_posteriors(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot open " + p.string());
    auto pm = read_posteriors(is);
    pm.validate();
    return pm;
}

inline void save_posteriors(const fs::path& p, const PosteriorMatrix& pm)
{
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw Error("cannot write " + p.string());
    write_posteriors(os, pm);
}

inline std::string posterior_file_name(const DialogueKey& k)
{
    return std::string(to_string(k.split)) + "_" + std::to_string(k.dialogue_id) + ".ctcp";
}

inline std::string timeline_file_name(const DialogueKey& k)
{
    return std::string(to_string(k.split)) + "_" + std::to_string(k.dialogue_id) + ".json";
}

inline DialogueKey parse_dialogue_key(const std::string& s)
{
    const auto slash = s.find('/');
    if (slash == std::string::npos) throw SchemaError("dialogue key '" + s + "' is not <split>/<id>");
    auto split = split_from_string(s.substr(0, slash));
    if (!split) throw SchemaError("dialogue key '" + s + "': unknown split");
    return {*split, static_cast<int>(detail::parse_int(s.substr(slash + 1), "dialogue_key"))};
}

/// Loads every *.ctcp file under `dir`, keyed by the header's dialogue key.
/// Unreadable files are reported, not fatal.
inline std::map<DialogueKey, PosteriorMatrix> load_posterior_dir(const fs::path& dir, std::vector<std::string>& issues)
{
    std::map<DialogueKey, PosteriorMatrix> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ctcp") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            auto pm = load_posteriors(f);
            const auto key = parse_dialogue_key(pm.dialogue_key);
            if (!out.emplace(key, std::move(pm)).second) issues.push_back(f.string() + ": duplicate dialogue key");
        } catch (const std::exception& e) {
            issues.push_back(f.string() + ": " + e.what());
        }
    }
    return out;
}

namespace detail
{
inline std::string csv_quote(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}
} // namespace detail

inline std::string records_to_csv(const std::vector<UtteranceRecord>& records)
{
    std::string out = "Sr No.,Utterance,Speaker,Emotion,Sentiment,Dialogue_ID,Utterance_ID,Season,Episode,StartTime,EndTime\n";
    std::size_t n = 0;
    for (const auto& r : records) {
        out += std::to_string(++n) + "," + detail::csv_quote(r.text) + "," + detail::csv_quote(r.speaker) + "," +
               std::string(to_string(r.emotion)) + "," + std::string(to_string(r.sentiment)) + "," +
               std::to_string(r.dialogue_id) + "," + std::to_string(r.utterance_id) + "," + std::to_string(r.season) +
               "," + std::to_string(r.episode) + "," + format_timestamp(r.start_ms) + "," +
               format_timestamp(r.end_ms) + "\n";
    }
    return out;
}

/// Run metadata written next to the manifest. Contains no timestamps or host
/// details so identical runs stay byte-identical.
inline nlohmann::json run_metadata(const RunConfig& config, std::size_t entries)
{
    return {{"tool", "avrefine"}, {"version", tool_version}, {"config", to_json(config)}, {"entries", entries}};
}

} // namespace avrefine

#endif // AVREFINE_PIPELINE_HPP
