// Command-line front end. Exit status: 0 clean, 2 when some dialogues or
// utterances failed but outputs were written, 1 on fatal errors.

#include "avrefine/avrefine.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <iostream>

namespace
{

using namespace avrefine;

void add_config_options(CLI::App& app, RunConfig& c)
{
    app.add_option("--theta", c.theta, "IoU threshold for linking faces across frames")->capture_default_str();
    app.add_option("--min-span-ms", c.min_span_ms, "Shortest realigned span kept")->capture_default_str();
    app.add_option("--min-confidence", c.min_confidence, "Lowest mean log-probability kept")->capture_default_str();
    app.add_flag("!--no-cut-fallback", c.cut_fallback, "Do not infer camera cuts when no cuts file is given");
    app.add_option("--exact-limit", c.exact_group_limit, "Largest conflict group solved exhaustively")
        ->capture_default_str();
    app.add_option("-j,--jobs", c.jobs, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
}

int finish(const StageSummary& s, const std::string& what)
{
    constexpr std::size_t shown = 20;
    for (std::size_t i = 0; i < s.issues.size() && i < shown; ++i) std::cerr << "warning: " << s.issues[i] << '\n';
    if (s.issues.size() > shown) std::cerr << "warning: " << s.issues.size() - shown << " more issues\n";
    std::cout << what << ": " << s.items << " items, " << s.errors << " errors\n";
    return s.errors > 0 ? 2 : 0;
}

RecordsInput parse_records_arg(const std::string& arg)
{
    const auto colon = arg.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--records", "expected <split>:<csv path>");
    auto split = split_from_string(arg.substr(0, colon));
    if (!split) throw CLI::ValidationError("--records", "unknown split '" + arg.substr(0, colon) + "'");
    return {*split, arg.substr(colon + 1)};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Realign MELD utterances to their transcripts and localise the speaking face"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(tool_version));

    RunConfig config;
    int status = 0;

    // realign
    auto* realign_cmd = app.add_subcommand("realign", "Build dialogue timelines and realign utterance boundaries");
    std::vector<std::string> records_args;
    std::string vocab_path, overrides_path, posteriors_dir, realign_out;
    bool no_overrides = false;
    realign_cmd->add_option("--records", records_args, "<split>:<csv path>, repeatable")->required();
    realign_cmd->add_option("--vocab", vocab_path, "JSON symbol list of the CTC model (default: LibriSpeech characters)");
    realign_cmd->add_option("--overrides", overrides_path, "Override list (default: the shipped corrections)");
    realign_cmd->add_flag("--no-overrides", no_overrides, "Apply no overrides");
    realign_cmd->add_option("--posteriors", posteriors_dir, "Directory of .ctcp posterior files")->check(CLI::ExistingDirectory);
    realign_cmd->add_option("-o,--out", realign_out, "Output directory")->required();
    add_config_options(*realign_cmd, config);
    realign_cmd->callback([&] {
        RealignJob job;
        for (const auto& a : records_args) job.records.push_back(parse_records_arg(a));
        if (!vocab_path.empty()) job.vocab = vocab_path;
        if (!overrides_path.empty())
            job.overrides = overrides_path;
        else if (!no_overrides && fs::exists(fs::path(AVREFINE_DATA_DIR) / "default_overrides.json"))
            job.overrides = fs::path(AVREFINE_DATA_DIR) / "default_overrides.json";
        if (!posteriors_dir.empty()) job.posteriors_dir = posteriors_dir;
        job.out_dir = realign_out;
        config.validate();
        status = finish(run_realign(job, config), "realign");
    });

    // localise
    auto* localise_cmd = app.add_subcommand("localise", "Link face detections and select the active speaker");
    std::string videos_dir, detections_path, scores_path, cuts_path, localise_out;
    auto* videos_opt = localise_cmd->add_option("--videos", videos_dir, "Tree of <split>/<dia>/<utt>/detections.jsonl")
                           ->check(CLI::ExistingDirectory);
    auto* dets_opt = localise_cmd->add_option("--detections", detections_path, "Single detections JSONL")
                         ->check(CLI::ExistingFile);
    videos_opt->excludes(dets_opt);
    localise_cmd->add_option("--scores", scores_path, "ASD scores JSONL for --detections")->needs(dets_opt);
    localise_cmd->add_option("--cuts", cuts_path, "Camera cuts JSON for --detections")->needs(dets_opt);
    localise_cmd->add_option("-o,--out", localise_out, "Output directory (--videos) or file (--detections)")->required();
    add_config_options(*localise_cmd, config);
    localise_cmd->callback([&] {
        config.validate();
        if (!videos_dir.empty()) {
            status = finish(run_localise(videos_dir, localise_out, config), "localise");
            return;
        }
        if (detections_path.empty()) throw CLI::RequiredError("--videos or --detections");
        std::ifstream dis(detections_path);
        const auto dets = read_detections(dis);
        std::optional<std::map<int, PhiScores>> scores;
        if (!scores_path.empty()) {
            std::ifstream sis(scores_path);
            if (!sis) throw Error("cannot open " + scores_path);
            scores = read_scores(sis);
        }
        std::optional<std::vector<CutInterval>> cuts;
        if (!cuts_path.empty()) cuts = cuts_from_json(read_json_file(cuts_path));
        const auto out = localise(dets, scores ? &*scores : nullptr, cuts ? &*cuts : nullptr, config);
        if (scores) {
            write_text_file(localise_out, to_json(out.result).dump() + "\n");
            std::cout << "localise: " << out.result.faces.size() << " speaker faces from "
                      << out.result.retained_track_ids.size() << " tracks\n";
        } else {
            std::ostringstream os;
            write_tracks(os, out.tracks);
            write_text_file(localise_out, os.str());
            std::cout << "localise: " << out.tracks.size() << " tracks\n";
        }
    });

    // manifest
    auto* manifest_cmd = app.add_subcommand("manifest", "Join realignment and localisation into the refined manifest");
    std::string edl_path, localised_dir, manifest_out;
    manifest_cmd->add_option("--edl", edl_path, "edl.jsonl from realign")->required()->check(CLI::ExistingFile);
    manifest_cmd->add_option("--localised", localised_dir, "Output directory of localise --videos")
        ->check(CLI::ExistingDirectory);
    manifest_cmd->add_option("-o,--out", manifest_out, "Manifest JSONL path")->required();
    add_config_options(*manifest_cmd, config);
    manifest_cmd->callback([&] {
        std::optional<fs::path> loc;
        if (!localised_dir.empty()) loc = localised_dir;
        status = finish(run_manifest(edl_path, loc, manifest_out, config), "manifest");
    });

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Retention per emotion, speaker and split");
    std::string stats_manifest;
    bool stats_json = false;
    stats_cmd->add_option("--manifest", stats_manifest, "Manifest JSONL")->required()->check(CLI::ExistingFile);
    stats_cmd->add_flag("--json", stats_json, "Print JSON instead of tables");
    stats_cmd->callback([&] {
        const auto st = compute_stats(load_manifest(stats_manifest));
        std::cout << (stats_json ? to_json(st).dump(2) + "\n" : render_stats(st));
    });

    // synth-check
    auto* synth_cmd = app.add_subcommand("synth-check", "Run the whole pipeline on seeded synthetic data");
    std::string synth_out;
    int synth_dialogues = 20;
    double synth_noise = 0.1;
    std::uint64_t synth_seed = 1;
    std::size_t synth_required = 19;
    synth_cmd->add_option("-o,--out", synth_out, "Working directory")->required();
    synth_cmd->add_option("--dialogues", synth_dialogues, "Dialogues to generate")->capture_default_str();
    synth_cmd->add_option("--noise", synth_noise, "Posterior noise level")->capture_default_str();
    synth_cmd->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
    synth_cmd->add_option("--require", synth_required, "Dialogues that must pass (capped at --dialogues)")->capture_default_str();
    add_config_options(*synth_cmd, config);
    synth_cmd->callback([&] {
        config.validate();
        const auto rep = synth::run_synth_check(synth_out, synth_dialogues, synth_noise, synth_seed, config);
        for (const auto& d : rep.dialogues)
            std::cout << d.key.str() << ": boundaries " << d.boundaries_ok << "/" << d.utterances << ", speaker "
                      << d.speakers_ok << "/" << d.utterances << (d.passed() ? "" : "  FAILED") << '\n';
        std::cout << "synth-check: " << rep.passed() << "/" << rep.dialogues.size() << " dialogues recovered\n";
        status = rep.passed() >= std::min(synth_required, rep.dialogues.size()) ? 0 : 2;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return status;
}
