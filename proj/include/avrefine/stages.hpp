#ifndef AVREFINE_STAGES_HPP
#define AVREFINE_STAGES_HPP

// Directory-level drivers for the pipeline stages. Layouts:
//
//   realign out:   <out>/edl.jsonl, <out>/timelines/<split>_<dia>.json, <out>/realign_report.json
//   video in:      <videos>/<split>/<dia>/<utt>/detections.jsonl [+ scores.jsonl] [+ cuts.json]
//   localise out:  <out>/<split>/<dia>/<utt>.tracks.jsonl [+ <utt>.json with the speaker result]
//   manifest out:  <path> and <path minus .jsonl>.meta.json

#include "avrefine/pipeline.hpp"

#include <optional>
#include <string>
#include <vector>

namespace avrefine
{

struct StageSummary
{
    std::vector<std::string> issues;
    std::size_t errors = 0; // dialogue- or utterance-level failures
    std::size_t items = 0;
};

struct RecordsInput
{
    Split split = Split::train;
    fs::path csv;
};

struct RealignJob
{
    std::vector<RecordsInput> records;
    std::optional<fs::path> vocab; // JSON symbol list; LibriSpeech characters when absent
    std::optional<fs::path> overrides;
    std::optional<fs::path> posteriors_dir;
    fs::path out_dir;
};

inline Vocabulary load_vocabulary(const std::optional<fs::path>& p)
{
    return p ? vocabulary_from_json(read_json_file(*p)) : Vocabulary::librispeech_chars();
}

inline StageSummary run_realign(const RealignJob& job, const RunConfig& config)
{
    StageSummary sum;
    std::vector<UtteranceRecord> records;
    nlohmann::json row_errors = nlohmann::json::array();
    for (const auto& in : job.records) {
        auto parsed = parse_records(read_text_file(in.csv), in.split);
        for (const auto& e : parsed.errors) {
            sum.issues.push_back(in.csv.filename().string() + " row " + std::to_string(e.row) + ": " + e.message);
            row_errors.push_back({{"file", in.csv.filename().string()}, {"row", e.row}, {"message", e.message}});
            ++sum.errors;
        }
        records.insert(records.end(), parsed.records.begin(), parsed.records.end());
    }

    OverrideList overrides;
    if (job.overrides) overrides = overrides_from_json(read_json_file(*job.overrides));
    auto [kept, report] = apply_overrides(std::move(records), overrides);
    nlohmann::json override_log = nlohmann::json::array();
    for (const auto& o : report.outcomes) {
        override_log.push_back({{"override", to_json(o.entry)}, {"applied", o.applied}, {"detail", o.detail}});
        if (!o.applied) sum.issues.push_back("override not applied: " + to_json(o.entry).dump());
    }

    const auto vocab = load_vocabulary(job.vocab);
    std::map<DialogueKey, PosteriorMatrix> posteriors;
    if (job.posteriors_dir) posteriors = load_posterior_dir(*job.posteriors_dir, sum.issues);

    const auto result = realign(kept, report, posteriors, vocab, config);
    sum.errors += result.fatal_dialogues;
    sum.items = result.rows.size();
    sum.issues.insert(sum.issues.end(), result.issues.begin(), result.issues.end());

    write_text_file(job.out_dir / "edl.jsonl", to_json_lines(result.rows));
    for (const auto& tl : result.timelines)
        write_text_file(job.out_dir / "timelines" / timeline_file_name(tl.key), to_json(tl).dump(1) + "\n");
    const nlohmann::json rep{{"rows", result.rows.size()},
                             {"dialogues", result.timelines.size()},
                             {"fatal_dialogues", result.fatal_dialogues},
                             {"row_errors", row_errors},
                             {"overrides", override_log},
                             {"issues", result.issues}};
    write_text_file(job.out_dir / "realign_report.json", rep.dump(1) + "\n");
    return sum;
}

namespace detail
{
template <class F>
auto with_input(const fs::path& p, F&& read)
{
    std::ifstream is(p, std::ios::binary);
    if (!is) throw Error("cannot open " + p.string());
    return read(is);
}
} // namespace detail

struct UtteranceVideo
{
    UtteranceKey key;
    fs::path dir;
};

/// Utterance directories holding a detections.jsonl, in key order.
inline std::vector<UtteranceVideo> find_utterance_videos(const fs::path& root)
{
    std::vector<UtteranceVideo> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file() || e.path().filename() != "detections.jsonl") continue;
        const auto rel = fs::relative(e.path().parent_path(), root);
        std::vector<std::string> parts;
        for (const auto& p : rel) parts.push_back(p.string());
        if (parts.size() != 3) continue;
        auto split = split_from_string(parts[0]);
        if (!split) continue;
        try {
            out.push_back({{*split, static_cast<int>(detail::parse_int(parts[1], "dialogue")),
                            static_cast<int>(detail::parse_int(parts[2], "utterance"))},
                           e.path().parent_path()});
        } catch (const ParseError&) {
            continue;
        }
    }
    std::sort(out.begin(), out.end(), [](const UtteranceVideo& a, const UtteranceVideo& b) { return a.key < b.key; });
    return out;
}

/// Runs localisation for one utterance directory and writes its outputs under
/// `out_stem` (.tracks.jsonl always, .json when scores exist).
inline std::optional<ActiveSpeakerResult> localise_utterance_dir(const fs::path& dir, const fs::path& out_stem,
                                                                 const RunConfig& config)
{
    const auto dets = detail::with_input(dir / "detections.jsonl", [](std::istream& is) { return read_detections(is); });
    std::optional<std::map<int, PhiScores>> scores;
    if (fs::exists(dir / "scores.jsonl"))
        scores = detail::with_input(dir / "scores.jsonl", [](std::istream& is) { return read_scores(is); });
    std::optional<std::vector<CutInterval>> cuts;
    if (fs::exists(dir / "cuts.json")) cuts = cuts_from_json(read_json_file(dir / "cuts.json"));

    const auto out = localise(dets, scores ? &*scores : nullptr, cuts ? &*cuts : nullptr, config);
    std::ostringstream tracks;
    write_tracks(tracks, out.tracks);
    write_text_file(fs::path(out_stem.string() + ".tracks.jsonl"), tracks.str());
    if (!scores) return std::nullopt;
    write_text_file(fs::path(out_stem.string() + ".json"), to_json(out.result).dump() + "\n");
    return out.result;
}

inline StageSummary run_localise(const fs::path& videos, const fs::path& out_dir, const RunConfig& config)
{
    StageSummary sum;
    const auto items = find_utterance_videos(videos);
    std::vector<std::string> errors(items.size());
    parallel_for(items.size(), config.jobs, [&](std::size_t i) {
        try {
            localise_utterance_dir(items[i].dir, out_dir / media_stem(items[i].key), config);
        } catch (const std::exception& e) {
            errors[i] = items[i].key.str() + ": " + e.what();
        }
    });
    for (auto& e : errors)
        if (!e.empty()) {
            sum.issues.push_back(std::move(e));
            ++sum.errors;
        }
    sum.items = items.size();
    return sum;
}

inline fs::path manifest_meta_path(const fs::path& manifest)
{
    auto p = manifest;
    if (p.extension() == ".jsonl") p.replace_extension();
    return fs::path(p.string() + ".meta.json");
}

/// Joins an EDL with localisation results. A missing or unreadable result counts
/// as no speaker found.
inline StageSummary run_manifest(const fs::path& edl_path, const std::optional<fs::path>& localise_dir,
                                 const fs::path& out, const RunConfig& config)
{
    StageSummary sum;
    const auto edl = read_json_lines<EdlRow>(edl_path, edl_row_from_json);
    std::map<UtteranceKey, int> counts;
    if (localise_dir) {
        for (const auto& r : edl) {
            if (r.status != EntryStatus::aligned) continue;
            const auto p = *localise_dir / (media_stem(r.key) + ".json");
            if (!fs::exists(p)) continue;
            try {
                counts[r.key] = static_cast<int>(active_speaker_from_json(read_json_file(p)).faces.size());
            } catch (const std::exception& e) {
                sum.issues.push_back(p.string() + ": " + e.what());
                ++sum.errors;
            }
        }
    }
    const auto entries = build_manifest(edl, counts);
    sum.items = entries.size();
    write_text_file(out, to_json_lines(entries));
    write_text_file(manifest_meta_path(out), run_metadata(config, entries.size()).dump(1) + "\n");
    return sum;
}

inline std::vector<ManifestEntry> load_manifest(const fs::path& p)
{
    return read_json_lines<ManifestEntry>(p, manifest_entry_from_json);
}

} // namespace avrefine

#endif // AVREFINE_STAGES_HPP
