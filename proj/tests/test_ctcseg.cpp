#include "avrefine/ctcseg.hpp"
#include "avrefine/synth.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace avrefine;

namespace
{

PosteriorMatrix peaked(const Vocabulary& vocab, const std::vector<int>& labels)
{
    std::mt19937_64 rng(0);
    return synth::posteriors_from_labels(labels, vocab, 0.0, rng);
}

} // namespace

TEST(Posteriors, BinaryRoundTrip)
{
    std::mt19937_64 rng(3);
    auto pm = oracle::random_posteriors(7, oracle::small_vocab(5), rng);
    pm.frame_duration_ms = 20;
    pm.dialogue_key = "dev/12";
    std::stringstream ss;
    write_posteriors(ss, pm);
    const auto back = read_posteriors(ss);
    EXPECT_EQ(back.frames, 7);
    EXPECT_EQ(back.vocab, pm.vocab);
    EXPECT_EQ(back.dialogue_key, "dev/12");
    EXPECT_EQ(back.logprobs, pm.logprobs);
    EXPECT_NO_THROW(back.validate());
}

TEST(Posteriors, RejectsDamagedFiles)
{
    std::mt19937_64 rng(3);
    const auto pm = oracle::random_posteriors(4, oracle::small_vocab(3), rng);
    std::stringstream ss;
    write_posteriors(ss, pm);
    const std::string bytes = ss.str();

    std::stringstream truncated(bytes.substr(0, bytes.size() - 2));
    EXPECT_THROW(read_posteriors(truncated), SchemaError);
    std::stringstream trailing(bytes + "x");
    EXPECT_THROW(read_posteriors(trailing), SchemaError);
    std::stringstream magic("CTCP0002" + bytes.substr(8));
    EXPECT_THROW(read_posteriors(magic), SchemaError);
}

TEST(Posteriors, ValidateChecksNormalisation)
{
    std::mt19937_64 rng(5);
    auto pm = oracle::random_posteriors(3, oracle::small_vocab(4), rng);
    EXPECT_NO_THROW(pm.validate());
    pm.logprobs[5] += 0.1f;
    EXPECT_THROW(pm.validate(), ValidationError);
    pm.logprobs.pop_back();
    EXPECT_THROW(pm.validate(), ValidationError);
}

TEST(Expansion, BlanksAndMinimumFrames)
{
    EXPECT_EQ(expand_with_blanks(std::vector<int>{2, 3}), (std::vector<int>{0, 2, 0, 3, 0}));
    EXPECT_EQ(min_frames(expand_with_blanks(std::vector<int>{2, 3})), 2);
    EXPECT_EQ(min_frames(expand_with_blanks(std::vector<int>{2, 2, 2})), 5);
}

TEST(Viterbi, TooFewFramesIsInfeasible)
{
    const auto vocab = oracle::small_vocab(4);
    const auto pm = peaked(vocab, {2, 2});
    EXPECT_THROW(viterbi_align(pm, expand_with_blanks(std::vector<int>{2, 2})), InfeasibleAlignment);
    EXPECT_NO_THROW(viterbi_align(peaked(vocab, {2, 0, 2}), expand_with_blanks(std::vector<int>{2, 2})));
}

TEST(Viterbi, FollowsAPeakedPath)
{
    const auto vocab = oracle::small_vocab(5);
    // blank A A blank B C C blank
    const auto pm = peaked(vocab, {0, 2, 2, 0, 3, 4, 4, 0});
    const auto a = viterbi_align(pm, expand_with_blanks(std::vector<int>{2, 3, 4}));
    EXPECT_EQ(a.state_path, (std::vector<int>{0, 1, 1, 2, 3, 5, 5, 6}));
    EXPECT_EQ(a.emission_frame, (std::vector<int>{0, 1, 3, 4, -1, 5, 7}));
}

TEST(Viterbi, MatchesExhaustiveLabellingSearch)
{
    std::mt19937_64 rng(2024);
    for (int iter = 0; iter < 300; ++iter) {
        const auto inst = oracle::random_ctc_instance(rng);
        const auto expanded = expand_with_blanks(inst.tokens);
        const auto best = oracle::best_labelling_score(inst.post, inst.tokens);
        if (!best) {
            EXPECT_THROW(viterbi_align(inst.post, expanded), InfeasibleAlignment);
            continue;
        }
        const auto a = viterbi_align(inst.post, expanded);
        ASSERT_NEAR(a.total, *best, 1e-9) << "iteration " << iter;
        double path_score = 0;
        for (int t = 0; t < inst.post.frames; ++t)
            path_score += inst.post.at(t, expanded[static_cast<std::size_t>(a.state_path[static_cast<std::size_t>(t)])]);
        ASSERT_NEAR(path_score, a.total, 1e-9);
    }
}

TEST(Viterbi, EmissionsAreMonotone)
{
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 300; ++iter) {
        const auto inst = oracle::random_ctc_instance(rng, 14, 5, 6);
        const auto expanded = expand_with_blanks(inst.tokens);
        if (inst.post.frames < min_frames(expanded)) continue;
        const auto a = viterbi_align(inst.post, expanded);
        int last = -1;
        for (std::size_t s = 1; s < expanded.size(); s += 2) {
            ASSERT_GT(a.emission_frame[s], last);
            last = a.emission_frame[s];
        }
        for (std::size_t t = 1; t < a.state_path.size(); ++t) {
            const int step = a.state_path[t] - a.state_path[t - 1];
            ASSERT_TRUE(step >= 0 && step <= 2);
        }
    }
}

TEST(Viterbi, RecoversPlantedPath)
{
    const auto vocab = Vocabulary::librispeech_chars();
    const auto tokens = normalize_utterance("we were on a break", vocab).tokens;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto planted = synth::plant_alignment(tokens, vocab, 80, 0.1, seed);
        const auto a = viterbi_align(planted.posteriors, planted.expanded);
        ASSERT_EQ(a.state_path, planted.state_path) << "seed " << seed;
    }
    EXPECT_THROW(synth::plant_alignment(tokens, vocab, 5, 0.1, 1), InfeasibleAlignment);
}

TEST(Spans, FrameToMillisecondsAndConfidence)
{
    const auto vocab = oracle::small_vocab(5);
    const auto pm = peaked(vocab, {0, 1, 2, 2, 3, 1, 4, 4, 1, 0});
    const std::vector<int> tokens{1, 2, 3, 1, 4, 1};
    const auto a = viterbi_align(pm, expand_with_blanks(tokens));
    const std::vector<UtteranceBound> bounds{{0, 1, 2}, {1, 4, 4}};
    const auto spans = utterance_spans(a, bounds, 20.0);
    ASSERT_EQ(spans.size(), 2u);
    EXPECT_EQ(spans[0].first_frame, 2);
    EXPECT_EQ(spans[0].last_frame, 4);
    EXPECT_EQ(spans[0].global_start_ms, 40);
    EXPECT_EQ(spans[0].global_end_ms, 100);
    EXPECT_EQ(spans[1].global_start_ms, 120);
    EXPECT_EQ(spans[1].global_end_ms, 140);
    EXPECT_NEAR(spans[0].confidence, (pm.at(2, 2) + pm.at(4, 3)) / 2, 1e-12);

    const auto f = filter_spans(spans, 50, -1.0);
    EXPECT_EQ(f[0].status, SpanStatus::aligned);
    EXPECT_EQ(f[1].status, SpanStatus::dropped_short);
    const auto g = filter_spans(spans, 0, 0.0);
    EXPECT_EQ(g[0].status, SpanStatus::dropped_low_confidence);
}

TEST(Spans, FractionalFrameDurationRounds)
{
    const auto vocab = oracle::small_vocab(3);
    const auto pm = peaked(vocab, {0, 2, 0, 0});
    const auto a = viterbi_align(pm, expand_with_blanks(std::vector<int>{2}));
    const std::vector<UtteranceBound> bounds{{0, 0, 0}};
    const auto s = utterance_spans(a, bounds, 20.0005)[0];
    EXPECT_EQ(s.global_start_ms, 20);
    EXPECT_EQ(s.global_end_ms, 40);
}
