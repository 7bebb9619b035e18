#include "avrefine/pipeline.hpp"
#include "avrefine/synth.hpp"

#include <gtest/gtest.h>

#include <atomic>

using namespace avrefine;

namespace
{

const Vocabulary vocab = Vocabulary::librispeech_chars();

Dialogue dialogue_of(const synth::SyntheticDialogue& sd) { return group_dialogues(sd.records).at(0); }

UtteranceRecord rec(int id, Millis start, Millis end, std::string text, Emotion e = Emotion::neutral)
{
    UtteranceRecord r;
    r.dialogue_id = r.source_dialogue_id = 3;
    r.utterance_id = id;
    r.start_ms = start;
    r.end_ms = end;
    r.text = std::move(text);
    r.emotion = e;
    r.speaker = "Joey";
    return r;
}

} // namespace

TEST(Realign, RecoversPlantedBoundaries)
{
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto sd = synth::make_dialogue({Split::train, 1}, vocab, 0.1, seed);
        const auto out = realign_dialogue(dialogue_of(sd), &sd.posteriors, vocab, RunConfig{});
        ASSERT_FALSE(out.fatal);
        for (const auto& truth : sd.truth) {
            const auto row = std::find_if(out.rows.begin(), out.rows.end(),
                                          [&](const EdlRow& r) { return r.key.utterance_id == truth.utterance_id; });
            ASSERT_NE(row, out.rows.end());
            ASSERT_EQ(row->status, EntryStatus::aligned) << "seed " << seed;
            ASSERT_EQ(*row->global_start_ms, truth.start_ms) << "seed " << seed;
            ASSERT_EQ(*row->global_end_ms, truth.end_ms) << "seed " << seed;
            // the clip cut lies inside the utterance's own audio
            ASSERT_EQ(row->start->utterance_id, truth.utterance_id);
            ASSERT_EQ(row->end->utterance_id, truth.utterance_id);
            ASSERT_LT(row->start->offset_ms, row->end->offset_ms);
        }
    }
}

TEST(Realign, FailuresBecomeDegenerateRows)
{
    const auto sd = synth::make_dialogue({Split::train, 1}, vocab, 0.1, 4);
    const auto d = dialogue_of(sd);

    auto missing = realign_dialogue(d, nullptr, vocab, RunConfig{});
    EXPECT_TRUE(missing.fatal);
    ASSERT_EQ(missing.rows.size(), d.utterances.size());
    for (const auto& r : missing.rows) {
        EXPECT_EQ(r.status, EntryStatus::degenerate);
        EXPECT_EQ(r.reason, "missing_posteriors");
    }

    auto other_vocab = sd.posteriors;
    other_vocab.vocab = Vocabulary({"<b>", "|", "A"});
    EXPECT_EQ(realign_dialogue(d, &other_vocab, vocab, RunConfig{}).rows[0].reason, "vocabulary_mismatch");

    auto short_post = sd.posteriors;
    short_post.frames = 3;
    short_post.logprobs.resize(3 * static_cast<std::size_t>(vocab.size()));
    const auto infeasible = realign_dialogue(d, &short_post, vocab, RunConfig{});
    EXPECT_TRUE(infeasible.fatal);
    EXPECT_EQ(infeasible.rows[0].reason, "infeasible_alignment");
    EXPECT_FALSE(infeasible.issues.empty()); // frame count disagrees with the timeline
}

TEST(Realign, EmptyAndSwallowedUtterances)
{
    Dialogue d{{Split::train, 3},
               {rec(0, 0, 3000, "Hello there"), rec(1, 500, 2000, "Swallowed"), rec(2, 3000, 4000, "?!"),
                rec(3, 4000, 6000, "Okay then")}};
    // 300 frames of 20 ms; symbols on odd frames keep the doubled L apart
    std::vector<int> labels(300, Vocabulary::blank);
    const auto put = [&](int frame, const std::string& s) {
        for (std::size_t i = 0; i < s.size(); ++i)
            labels[static_cast<std::size_t>(frame) + 2 * i] = s[i] == ' ' ? vocab.word_delimiter() : *vocab.find(std::string(1, s[i]));
    };
    put(5, "|HELLO THERE|");
    put(205, "OKAY THEN|");
    std::mt19937_64 rng(1);
    auto post = synth::posteriors_from_labels(labels, vocab, 0.0, rng);
    const auto out = realign_dialogue(d, &post, vocab, RunConfig{});
    EXPECT_FALSE(out.fatal);
    ASSERT_EQ(out.rows.size(), 4u);
    EXPECT_EQ(out.rows[0].status, EntryStatus::aligned);
    EXPECT_EQ(out.rows[1].reason, "overlap_swallowed");
    EXPECT_EQ(out.rows[2].reason, "empty_transcript");
    EXPECT_EQ(out.rows[2].status, EntryStatus::degenerate);
    EXPECT_EQ(out.rows[3].status, EntryStatus::aligned);
    EXPECT_EQ(*out.rows[0].global_start_ms, 140);
    EXPECT_EQ(*out.rows[0].global_end_ms, 560);
    EXPECT_EQ(*out.rows[3].global_start_ms, 4100);
    EXPECT_EQ(out.rows[3].start->utterance_id, 3);
    EXPECT_EQ(out.rows[3].start->offset_ms, 100);
}

TEST(ClipMapping, SilenceEndpointsSnapToAudio)
{
    Dialogue d{{Split::train, 3}, {rec(0, 0, 1000, "a"), rec(1, 5000, 6000, "b")}};
    const auto tl = build_timeline(d); // U0 [0,1000) silence [1000,1250) U1 [1250,2250)
    auto [s, e] = map_span_to_clips(tl, 1100, 1200);
    EXPECT_EQ(s, (ClipPoint{1, 0}));
    EXPECT_EQ(e, (ClipPoint{0, 1000}));
    std::tie(s, e) = map_span_to_clips(tl, 500, 1250);
    EXPECT_EQ(s, (ClipPoint{0, 500}));
    EXPECT_EQ(e, (ClipPoint{0, 1000}));
    std::tie(s, e) = map_span_to_clips(tl, 1250, 2250);
    EXPECT_EQ(s, (ClipPoint{1, 0}));
    EXPECT_EQ(e, (ClipPoint{1, 1000}));
}

TEST(Realign, RowsCoverDroppedRecordsInKeyOrder)
{
    const auto sd = synth::make_dialogue({Split::dev, 2}, vocab, 0.1, 9);
    OverrideReport report;
    auto dropped = rec(7, 0, 100, "gone");
    dropped.split = Split::dev;
    dropped.dialogue_id = dropped.source_dialogue_id = 1;
    report.dropped.push_back(dropped);
    const std::map<DialogueKey, PosteriorMatrix> post{{sd.key, sd.posteriors}};
    RunConfig cfg;
    cfg.jobs = 3;
    const auto res = realign(sd.records, report, post, vocab, cfg);
    ASSERT_EQ(res.rows.size(), sd.records.size() + 1);
    EXPECT_EQ(res.rows[0].key.dialogue_id, 1);
    EXPECT_EQ(res.rows[0].reason, "dropped_by_override");
    EXPECT_TRUE(std::is_sorted(res.rows.begin(), res.rows.end(),
                               [](const EdlRow& a, const EdlRow& b) { return a.key < b.key; }));
    EXPECT_EQ(res.fatal_dialogues, 0u);
}

TEST(EdlJson, RoundTrip)
{
    EdlRow r;
    r.key = {Split::test, 4, 2};
    r.timeline_dialogue_id = 5;
    r.speaker = "Monica";
    r.emotion = Emotion::fear;
    r.status = EntryStatus::aligned;
    r.global_start_ms = 100;
    r.global_end_ms = 900;
    r.confidence = -0.25;
    r.start = ClipPoint{2, 40};
    r.end = ClipPoint{2, 840};
    const auto back = edl_row_from_json(nlohmann::json::parse(to_json(r).dump()));
    EXPECT_EQ(to_json(back), to_json(r));
    EXPECT_EQ(back.start, r.start);
}

TEST(Manifest, JoinsLocalisation)
{
    std::vector<EdlRow> edl(3);
    for (int i = 0; i < 3; ++i) {
        edl[static_cast<std::size_t>(i)].key = {Split::train, 9, 2 - i};
        edl[static_cast<std::size_t>(i)].status = EntryStatus::aligned;
        edl[static_cast<std::size_t>(i)].global_start_ms = 0;
        edl[static_cast<std::size_t>(i)].global_end_ms = 500;
    }
    edl[2].status = EntryStatus::dropped_short;
    const auto m = build_manifest(edl, {{{Split::train, 9, 2}, 12}, {{Split::train, 9, 1}, 0}});
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m[0].key.utterance_id, 0); // sorted
    EXPECT_EQ(m[0].status, EntryStatus::dropped_short);
    EXPECT_FALSE(m[0].audio_ref);
    EXPECT_EQ(m[1].status, EntryStatus::no_active_speaker);
    EXPECT_EQ(*m[1].audio_ref, "train/9/1.wav");
    EXPECT_FALSE(m[1].faces_ref);
    EXPECT_EQ(m[2].status, EntryStatus::aligned);
    EXPECT_EQ(m[2].faces_ref->path, "train/9/2/");
    EXPECT_EQ(m[2].faces_ref->count, 12);

    for (const auto& e : m) EXPECT_EQ(to_json(manifest_entry_from_json(to_json(e))), to_json(e));
    edl.push_back(edl[0]);
    EXPECT_THROW(build_manifest(edl, {}), ValidationError);
}

TEST(Stats, CountsRetentionPerEmotionSpeakerAndSplit)
{
    std::vector<ManifestEntry> m;
    const auto add = [&](Split s, int dia, int utt, EntryStatus st, Emotion e, const char* who) {
        ManifestEntry x;
        x.key = {s, dia, utt};
        x.status = st;
        x.emotion = e;
        x.speaker = who;
        m.push_back(x);
    };
    add(Split::train, 0, 0, EntryStatus::aligned, Emotion::joy, "Ross");
    add(Split::train, 0, 1, EntryStatus::no_active_speaker, Emotion::joy, "Gunther");
    add(Split::train, 1, 0, EntryStatus::aligned, Emotion::anger, "Ross");
    add(Split::test, 0, 0, EntryStatus::degenerate, Emotion::neutral, "Rachel");
    const auto st = compute_stats(m);
    const auto& train = st.splits.at(Split::train);
    EXPECT_EQ(train.by_emotion.at(Emotion::joy).retained, 1);
    EXPECT_EQ(train.by_emotion.at(Emotion::joy).original, 2);
    EXPECT_EQ(train.by_speaker.at("Ross").retained, 2);
    EXPECT_EQ(train.by_speaker.at("others").original, 1);
    EXPECT_EQ(train.dialogues, 2);
    EXPECT_EQ(train.dialogues_with_loss, 1);
    EXPECT_EQ(st.overall.retained, 2);
    EXPECT_EQ(st.overall.original, 4);
    EXPECT_DOUBLE_EQ(st.overall.retention(), 50.0);

    const auto text = render_stats(st);
    EXPECT_NE(text.find("2 (3)"), std::string::npos);
    EXPECT_NE(text.find("others"), std::string::npos);
    EXPECT_EQ(to_json(st)["splits"]["test"]["total"]["retained"], 0);
}

TEST(Parallel, RunsEveryIndexOnceAndRethrows)
{
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 100);
    std::atomic<int> ran{0};
    EXPECT_THROW(parallel_for(10, 3,
                              [&](std::size_t i) {
                                  ++ran;
                                  if (i == 4) throw std::runtime_error("boom");
                              }),
                 std::runtime_error);
    EXPECT_EQ(ran.load(), 10);
}

TEST(Config, ValidatesTheta)
{
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    c.theta = 1.0;
    EXPECT_THROW(c.validate(), RangeError);
}
