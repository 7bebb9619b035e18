#ifndef AVREFINE_SYNTH_HPP
#define AVREFINE_SYNTH_HPP

// Seeded fixtures with known answers: CTC posteriors built around a planted
// path, whole dialogues with their true utterance frames, face detection
// streams with known identities, and ASD score scenes with a known speaker.

#include "avrefine/stages.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace avrefine::synth
{

using Rng = std::mt19937_64;

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform_real(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline bool coin(Rng& rng, double p) { return std::bernoulli_distribution(p)(rng); }

// ---------------------------------------------------------------------------
// Posteriors

/// Logit advantage of the planted symbol over the rest of its frame.
inline constexpr double peak_margin = 8.0;

/// Noise is uniform in +-noise*peak_margin per logit. Below this level the
/// planted symbol stays the per-frame argmax, so the planted path is the unique
/// best alignment.
inline constexpr double exact_noise_limit = 0.5;

/// Builds log-softmax rows from a per-frame symbol label.
inline PosteriorMatrix posteriors_from_labels(const std::vector<int>& labels, const Vocabulary& vocab, double noise,
                                              Rng& rng, double frame_duration_ms = 20.0)
{
    if (noise < 0) throw RangeError("synth: noise must be >= 0");
    PosteriorMatrix pm;
    pm.frames = static_cast<int>(labels.size());
    pm.vocab = vocab;
    pm.frame_duration_ms = frame_duration_ms;
    const auto v = static_cast<std::size_t>(vocab.size());
    pm.logprobs.resize(labels.size() * v);
    std::vector<double> logits(v);
    for (std::size_t t = 0; t < labels.size(); ++t) {
        for (std::size_t k = 0; k < v; ++k) {
            logits[k] = (static_cast<int>(k) == labels[t] ? peak_margin : 0.0);
            if (noise > 0) logits[k] += uniform_real(rng, -noise * peak_margin, noise * peak_margin);
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double acc = 0;
        for (double l : logits) acc += std::exp(l - mx);
        const double lse = mx + std::log(acc);
        for (std::size_t k = 0; k < v; ++k) pm.logprobs[t * v + k] = static_cast<float>(logits[k] - lse);
    }
    return pm;
}

struct PlantedAlignment
{
    std::vector<int> expanded;
    std::vector<int> state_path;     // state per frame
    std::vector<int> emission_frame; // first frame of each state, -1 if skipped
    PosteriorMatrix posteriors;
};

/// Random valid CTC path over `tokens` spanning `frames` frames, with posteriors
/// peaked on it. Every non-blank state gets at least one frame; blanks are
/// skipped at random where the topology allows.
inline PlantedAlignment plant_alignment(std::span<const int> tokens, const Vocabulary& vocab, int frames, double noise,
                                        std::uint64_t seed)
{
    Rng rng(seed);
    PlantedAlignment out;
    out.expanded = expand_with_blanks(tokens);
    if (frames < min_frames(out.expanded))
        throw InfeasibleAlignment("synth: " + std::to_string(frames) + " frames cannot hold the transcript");

    const std::size_t s = out.expanded.size();
    std::vector<int> dur(s, 0);
    for (std::size_t i = 0; i < s; ++i) {
        const bool blank = out.expanded[i] == Vocabulary::blank;
        const bool required = blank && i > 0 && i + 1 < s && out.expanded[i - 1] == out.expanded[i + 1];
        dur[i] = !blank || required ? 1 : 0;
    }
    int used = std::accumulate(dur.begin(), dur.end(), 0);
    for (int extra = frames - used; extra > 0; --extra) ++dur[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(s) - 1))];

    out.emission_frame.assign(s, -1);
    for (std::size_t i = 0; i < s; ++i) {
        if (dur[i] > 0) out.emission_frame[i] = static_cast<int>(out.state_path.size());
        out.state_path.insert(out.state_path.end(), static_cast<std::size_t>(dur[i]), static_cast<int>(i));
    }
    std::vector<int> labels;
    for (int st : out.state_path) labels.push_back(out.expanded[static_cast<std::size_t>(st)]);
    out.posteriors = posteriors_from_labels(labels, vocab, noise, rng);
    return out;
}

// ---------------------------------------------------------------------------
// Dialogues

inline const std::vector<std::string>& word_bank()
{
    static const std::vector<std::string> words{
        "hello", "there", "how", "you", "doing", "okay", "what", "is", "this", "we", "were", "on", "a",
        "break", "could", "I", "be", "any", "more", "coffee", "really", "no", "way", "oh", "my", "god",
        "smelly", "cat", "pivot", "I'm", "don't", "apartment", "tomorrow", "sandwich", "dinosaurs", "yeah"};
    return words;
}

inline constexpr std::array<const char*, 8> speaker_bank{"Rachel", "Monica", "Phoebe", "Joey",
                                                        "Chandler", "Ross", "Gunther", "Janice"};

struct PlantedUtterance
{
    int utterance_id = 0;
    Millis start_ms = 0; // true span on the dialogue timeline, [start, end)
    Millis end_ms = 0;
    int first_frame = 0;
    int last_frame = 0;
};

struct SyntheticDialogue
{
    DialogueKey key;
    std::vector<UtteranceRecord> records;
    DialogueTimeline timeline;
    PosteriorMatrix posteriors;
    std::vector<PlantedUtterance> truth; // timeline order
};

namespace detail
{
inline std::string random_sentence(Rng& rng, const Vocabulary& vocab)
{
    const auto& bank = word_bank();
    for (;;) {
        std::string s;
        const int n = uniform_int(rng, 2, 7);
        for (int i = 0; i < n; ++i) {
            if (i) s += coin(rng, 0.15) ? ", " : " ";
            s += bank[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(bank.size()) - 1))];
        }
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
        s += coin(rng, 0.5) ? "!" : (coin(rng, 0.5) ? "?" : ".");
        if (normalize_utterance(s, vocab).tokens.size() >= 10) return s;
    }
}

struct TokenLayout
{
    std::vector<int> width; // frames per token
    std::vector<int> gap;   // blank frames after each token
    int span() const { return std::accumulate(width.begin(), width.end(), 0) + std::accumulate(gap.begin(), gap.end(), 0); }
};

inline TokenLayout random_layout(const std::vector<int>& tokens, Rng& rng)
{
    TokenLayout l;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        l.width.push_back(uniform_int(rng, 2, 3));
        const bool last = i + 1 == tokens.size();
        const bool repeat = !last && tokens[i + 1] == tokens[i];
        l.gap.push_back(last ? 0 : (repeat ? 1 : uniform_int(rng, 0, 1)));
    }
    return l;
}
} // namespace detail

/// A dialogue with overlaps and gaps of every kind, plus posteriors whose best
/// path puts each utterance's characters at known frames.
inline SyntheticDialogue make_dialogue(const DialogueKey& key, const Vocabulary& vocab, double noise,
                                       std::uint64_t seed, double frame_duration_ms = 20.0)
{
    Rng rng(seed);
    const int n = uniform_int(rng, 2, 5);
    const auto fd = frame_duration_ms;

    struct Plan
    {
        std::string text;
        std::vector<int> tokens;
        detail::TokenLayout layout;
    };
    std::vector<Plan> plans;
    for (int i = 0; i < n; ++i) {
        Plan p;
        p.text = detail::random_sentence(rng, vocab);
        p.tokens = normalize_utterance(p.text, vocab).tokens;
        p.layout = detail::random_layout(p.tokens, rng);
        plans.push_back(std::move(p));
    }

    SyntheticDialogue out;
    out.key = key;
    const int season = uniform_int(rng, 1, 10);
    const int episode = uniform_int(rng, 1, 24);
    Millis cursor = 60'000 + uniform_int(rng, 0, 600'000);
    Millis prev_end = cursor;
    for (int i = 0; i < n; ++i) {
        Millis start = prev_end;
        Millis overlap = 0;
        if (i > 0) {
            switch (uniform_int(rng, 0, 3)) {
            case 0: overlap = uniform_int(rng, 40, 400); break;
            case 1: break;
            case 2: start += uniform_int(rng, 1, 249); break;
            default: start += uniform_int(rng, 250, 4000); break;
            }
            start -= overlap;
        }
        // two spare frames each side plus rounding slack against an unaligned segment start
        const Millis body = static_cast<Millis>(std::ceil((plans[static_cast<std::size_t>(i)].layout.span() + 6) * fd));
        const Millis len = body + overlap + uniform_int(rng, 0, 200);
        UtteranceRecord r;
        r.split = key.split;
        r.dialogue_id = r.source_dialogue_id = key.dialogue_id;
        r.utterance_id = i;
        r.speaker = speaker_bank[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(speaker_bank.size()) - 1))];
        r.emotion = all_emotions[static_cast<std::size_t>(uniform_int(rng, 0, 6))];
        r.sentiment = r.emotion == Emotion::neutral ? Sentiment::neutral
                      : r.emotion == Emotion::joy   ? Sentiment::positive
                                                    : Sentiment::negative;
        r.season = season;
        r.episode = episode;
        r.start_ms = start;
        r.end_ms = start + len;
        r.text = plans[static_cast<std::size_t>(i)].text;
        out.records.push_back(r);
        prev_end = r.end_ms;
    }

    out.timeline = build_timeline(Dialogue{key, out.records});
    if (!out.timeline.degenerate.empty()) throw Error("synth: generated dialogue has a swallowed utterance");
    const int frames = static_cast<int>(std::ceil(static_cast<double>(out.timeline.total_ms) / fd));
    std::vector<int> labels(static_cast<std::size_t>(frames), Vocabulary::blank);

    std::vector<std::pair<int, int>> char_extent; // first and last occupied frame per utterance
    for (const auto& seg : out.timeline.segments) {
        if (seg.kind != SegmentKind::utterance) continue;
        const auto& plan = plans[static_cast<std::size_t>(*seg.utterance_id)];
        const int a = static_cast<int>(std::ceil(static_cast<double>(seg.global_start_ms) / fd));
        const int b = static_cast<int>(std::floor(static_cast<double>(seg.global_end_ms) / fd)); // exclusive
        const int lo = a + 1, hi = b - 2;                                                       // inclusive room
        const int slack = hi - lo + 1 - plan.layout.span();
        if (slack < 0) throw Error("synth: utterance does not fit its segment");
        int f = lo + uniform_int(rng, 0, slack);
        PlantedUtterance pu;
        pu.utterance_id = *seg.utterance_id;
        const int first = f;
        for (std::size_t k = 0; k < plan.tokens.size(); ++k) {
            if (k + 1 == plan.tokens.size()) pu.last_frame = f;
            for (int w = 0; w < plan.layout.width[k]; ++w) labels[static_cast<std::size_t>(f++)] = plan.tokens[k];
            f += plan.layout.gap[k];
        }
        pu.first_frame = first;
        pu.start_ms = std::llround(pu.first_frame * fd);
        pu.end_ms = std::llround((pu.last_frame + 1) * fd);
        char_extent.emplace_back(first, f - 1);
        out.truth.push_back(pu);
    }
    // utterance boundary markers in the free frames around each utterance
    const int delim = vocab.word_delimiter();
    labels[static_cast<std::size_t>(uniform_int(rng, 0, char_extent.front().first - 1))] = delim;
    for (std::size_t i = 0; i + 1 < char_extent.size(); ++i)
        labels[static_cast<std::size_t>(uniform_int(rng, char_extent[i].second + 1, char_extent[i + 1].first - 1))] = delim;
    labels[static_cast<std::size_t>(uniform_int(rng, char_extent.back().second + 1, frames - 1))] = delim;

    out.posteriors = posteriors_from_labels(labels, vocab, noise, rng, fd);
    out.posteriors.dialogue_key = key.str();
    return out;
}

// ---------------------------------------------------------------------------
// Detection streams

struct DetectionStream
{
    std::vector<std::vector<FaceDetection>> per_frame;
    // per identity run: (frame, detection index)
    std::vector<std::vector<std::pair<int, int>>> identities;
};

/// Up to `max_faces` faces wandering over a 640x480 canvas, appearing and
/// leaving at random. Moves are rejected whenever they would bring two
/// different faces to IoU >= theta across consecutive frames, and every face
/// keeps IoU > theta with itself between frames.
inline DetectionStream make_detection_stream(int max_faces, int frames, double theta, std::uint64_t seed)
{
    Rng rng(seed);
    struct Face
    {
        Box box;
        int identity;
    };
    std::vector<Face> alive, prev;
    int next_identity = 0;
    std::vector<std::vector<std::pair<int, Box>>> placed(static_cast<std::size_t>(frames)); // identity, box

    const auto clear_of = [&](const Box& b, int identity, const std::vector<Face>& now) {
        for (const auto& p : prev)
            if (p.identity != identity && iou(b, p.box) >= theta) return false;
        for (const auto& q : now)
            if (q.identity != identity && iou(b, q.box) >= theta) return false;
        return true;
    };

    for (int f = 0; f < frames; ++f) {
        std::vector<Face> now;
        for (const auto& face : alive) {
            if (coin(rng, 0.03)) continue; // leaves
            bool moved = false;
            for (int attempt = 0; attempt < 20 && !moved; ++attempt) {
                Box b = face.box;
                const double dx = uniform_real(rng, -4, 4), dy = uniform_real(rng, -4, 4);
                const double grow = uniform_real(rng, -1.5, 1.5);
                b = {b.x1 + dx - grow, b.y1 + dy - grow, b.x2 + dx + grow, b.y2 + dy + grow};
                if (b.x1 < 0 || b.y1 < 0 || b.x2 > 640 || b.y2 > 480 || b.x2 - b.x1 < 40) continue;
                if (iou(b, face.box) <= theta || !clear_of(b, face.identity, now)) continue;
                now.push_back({b, face.identity});
                moved = true;
            }
        }
        if (static_cast<int>(now.size()) < max_faces && coin(rng, f == 0 ? 1.0 : 0.08)) {
            const int spawn = f == 0 ? uniform_int(rng, 1, max_faces) : 1;
            for (int s = 0; s < spawn && static_cast<int>(now.size()) < max_faces; ++s) {
                for (int attempt = 0; attempt < 20; ++attempt) {
                    const double w = uniform_real(rng, 50, 110);
                    const double x = uniform_real(rng, 0, 640 - w), y = uniform_real(rng, 0, 480 - w);
                    const Box b{x, y, x + w, y + w};
                    if (!clear_of(b, next_identity, now)) continue;
                    now.push_back({b, next_identity++});
                    break;
                }
            }
        }
        for (const auto& face : now) placed[static_cast<std::size_t>(f)].emplace_back(face.identity, face.box);
        prev = now;
        alive = std::move(now);
    }

    DetectionStream out;
    out.per_frame.resize(static_cast<std::size_t>(frames));
    std::map<int, std::vector<std::pair<int, int>>> runs;
    for (int f = 0; f < frames; ++f) {
        auto& faces = placed[static_cast<std::size_t>(f)];
        std::shuffle(faces.begin(), faces.end(), rng);
        for (std::size_t d = 0; d < faces.size(); ++d) {
            out.per_frame[static_cast<std::size_t>(f)].push_back({f, faces[d].second, uniform_real(rng, 0.5, 1.0)});
            runs[faces[d].first].emplace_back(f, static_cast<int>(d));
        }
    }
    for (auto& [id, run] : runs) out.identities.push_back(std::move(run));
    return out;
}

// ---------------------------------------------------------------------------
// Speaker scenes

struct FaceSceneParams
{
    int faces = 3;       // visible in every frame
    int frames = 60;
    bool cut = false;    // one camera cut halfway, faces reshuffled afterwards
    bool spurious = true; // short positive bursts on silent faces
    bool provide_cuts = true;
};

struct FaceScene
{
    std::vector<std::vector<FaceDetection>> per_frame;
    std::map<int, PhiScores> scores; // keyed by linked track id
    std::vector<CutInterval> cuts;
    std::vector<Box> speaker_boxes; // per frame
};

/// Faces sit in fixed slots with small jitter; slots are far apart so tracks
/// never cross. After a cut every face moves to another row, so no track spans
/// the cut. Track ids therefore follow (shot, slot).
inline FaceScene make_face_scene(const FaceSceneParams& p, std::uint64_t seed)
{
    if (p.faces < 1 || p.faces > 4) throw RangeError("synth: 1..4 faces");
    if (p.frames < 20) throw RangeError("synth: at least 20 frames");
    Rng rng(seed);
    FaceScene out;
    const int cut_at = p.cut ? p.frames / 2 : p.frames;
    const int speaker = uniform_int(rng, 0, p.faces - 1);

    struct Shot
    {
        int begin, end; // [begin, end)
        std::vector<int> slot_of_face;
    };
    std::vector<Shot> shots;
    for (int begin = 0, s = 0; begin < p.frames; ++s) {
        const int end = s == 0 ? cut_at : p.frames;
        Shot shot{begin, end, std::vector<int>(static_cast<std::size_t>(p.faces))};
        std::iota(shot.slot_of_face.begin(), shot.slot_of_face.end(), 0);
        std::shuffle(shot.slot_of_face.begin(), shot.slot_of_face.end(), rng);
        shots.push_back(std::move(shot));
        begin = end;
    }
    if (p.cut && p.provide_cuts) out.cuts = {{0, cut_at - 1}, {cut_at, p.frames - 1}};

    out.per_frame.resize(static_cast<std::size_t>(p.frames));
    out.speaker_boxes.resize(static_cast<std::size_t>(p.frames));
    int first_track = 0;
    for (std::size_t s = 0; s < shots.size(); ++s) {
        const auto& shot = shots[s];
        const double row = s % 2 == 0 ? 60.0 : 300.0;
        for (int face = 0; face < p.faces; ++face) {
            const int slot = shot.slot_of_face[static_cast<std::size_t>(face)];
            const int track_id = first_track + slot;
            const bool speaks = face == speaker;
            const int len = shot.end - shot.begin;
            std::vector<double> base(static_cast<std::size_t>(len));
            for (auto& v : base) v = speaks ? std::normal_distribution<double>(1.0, 0.4)(rng)
                                            : std::normal_distribution<double>(-1.2, 0.3)(rng);
            if (!speaks && p.spurious && coin(rng, 0.6)) {
                const int burst = uniform_int(rng, 2, std::min(5, len / 4));
                const int at = uniform_int(rng, 0, len - burst);
                for (int k = 0; k < burst; ++k) base[static_cast<std::size_t>(at + k)] = 0.8;
            }
            PhiScores per_phi;
            for (int phi : asd_block_lengths) {
                std::vector<double> arr(base.size());
                for (std::size_t k = 0; k < arr.size(); ++k)
                    arr[k] = coin(rng, 0.03) ? std::numeric_limits<double>::quiet_NaN()
                                             : base[k] + std::normal_distribution<double>(0.0, 0.15)(rng);
                per_phi[phi] = std::move(arr);
            }
            out.scores[track_id] = std::move(per_phi);

            double jx = 0, jy = 0;
            for (int f = shot.begin; f < shot.end; ++f) {
                jx = std::clamp(jx + uniform_real(rng, -1, 1), -3.0, 3.0);
                jy = std::clamp(jy + uniform_real(rng, -1, 1), -3.0, 3.0);
                const double x = 20.0 + 150.0 * slot + jx;
                const Box b{x, row + jy, x + 100.0, row + jy + 110.0};
                out.per_frame[static_cast<std::size_t>(f)].push_back({f, b, 0.9});
                if (speaks) out.speaker_boxes[static_cast<std::size_t>(f)] = b;
            }
        }
        first_track += p.faces;
    }
    for (auto& dets : out.per_frame) std::shuffle(dets.begin(), dets.end(), rng);
    return out;
}

/// Three faces that all speak equally often in one shot: every pair conflicts
/// and the tie goes to the lowest track id, the leftmost face.
inline FaceScene make_tied_conflict_scene(std::uint64_t seed, int frames = 40)
{
    Rng rng(seed);
    FaceScene out;
    out.per_frame.resize(static_cast<std::size_t>(frames));
    out.speaker_boxes.resize(static_cast<std::size_t>(frames));
    const int positives = uniform_int(rng, 3, frames / 4);
    for (int slot = 0; slot < 3; ++slot) {
        std::vector<double> arr(static_cast<std::size_t>(frames), -1.0);
        std::vector<int> idx(static_cast<std::size_t>(frames));
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int k = 0; k < positives; ++k) arr[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = 0.5;
        out.scores[slot][25] = arr;
        for (int f = 0; f < frames; ++f) {
            const Box b{20.0 + 150.0 * slot, 60.0, 120.0 + 150.0 * slot, 170.0};
            out.per_frame[static_cast<std::size_t>(f)].push_back({f, b, 0.9});
            if (slot == 0) out.speaker_boxes[static_cast<std::size_t>(f)] = b;
        }
    }
    return out;
}

inline void write_face_scene(const fs::path& dir, const FaceScene& scene)
{
    std::ostringstream dets, scores;
    write_detections(dets, scene.per_frame);
    write_scores(scores, scene.scores);
    write_text_file(dir / "detections.jsonl", dets.str());
    write_text_file(dir / "scores.jsonl", scores.str());
    if (!scene.cuts.empty()) write_text_file(dir / "cuts.json", to_json(scene.cuts).dump() + "\n");
}

/// True when the result holds exactly the expected speaker box at every frame.
inline bool matches_speaker(const ActiveSpeakerResult& r, const std::vector<Box>& expected)
{
    if (r.faces.size() != expected.size()) return false;
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (r.faces[i].frame != static_cast<int>(i) || !(r.faces[i].box == expected[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// End-to-end check

struct SynthCheckReport
{
    struct Dialogue
    {
        DialogueKey key;
        std::size_t utterances = 0;
        std::size_t boundaries_ok = 0;
        std::size_t speakers_ok = 0;
        bool passed() const { return boundaries_ok == utterances && speakers_ok == utterances; }
    };
    std::vector<Dialogue> dialogues;
    std::vector<std::string> issues;
    fs::path manifest;

    std::size_t passed() const
    {
        return static_cast<std::size_t>(
            std::count_if(dialogues.begin(), dialogues.end(), [](const Dialogue& d) { return d.passed(); }));
    }
};

/// Writes a synthetic corpus under `dir`, runs realign, localise and manifest
/// through their files, and scores the outcome against the planted truth.
/// Boundaries must land within one frame; the speaker's face must be recovered
/// at every video frame.
inline SynthCheckReport run_synth_check(const fs::path& dir, int dialogues, double noise, std::uint64_t seed,
                                        const RunConfig& config)
{
    const auto vocab = Vocabulary::librispeech_chars();
    const double fd = 20.0;
    Rng master(seed);

    std::vector<SyntheticDialogue> corpus;
    std::vector<UtteranceRecord> records;
    for (int d = 0; d < dialogues; ++d) {
        auto sd = make_dialogue({Split::train, d}, vocab, noise, master(), fd);
        save_posteriors(dir / "posteriors" / posterior_file_name(sd.key), sd.posteriors);
        records.insert(records.end(), sd.records.begin(), sd.records.end());
        corpus.push_back(std::move(sd));
    }
    write_text_file(dir / "train_sent_emo.csv", records_to_csv(records));
    write_text_file(dir / "vocab.json", to_json(vocab).dump() + "\n");

    RealignJob job;
    job.records = {{Split::train, dir / "train_sent_emo.csv"}};
    job.vocab = dir / "vocab.json";
    job.posteriors_dir = dir / "posteriors";
    job.out_dir = dir / "realign";
    SynthCheckReport report;
    auto rs = run_realign(job, config);
    report.issues = rs.issues;

    // Video for each utterance: 25 fps over its true span.
    std::map<UtteranceKey, std::vector<Box>> expected_faces;
    for (const auto& sd : corpus)
        for (const auto& pu : sd.truth) {
            const UtteranceKey key{sd.key.split, sd.key.dialogue_id, pu.utterance_id};
            FaceSceneParams p;
            p.frames = std::clamp(static_cast<int>((pu.end_ms - pu.start_ms) / 40), 30, 150);
            p.faces = static_cast<int>(master() % 4) + 1;
            p.cut = master() % 3 == 0;
            p.provide_cuts = master() % 2 == 0;
            const auto scene = make_face_scene(p, master());
            write_face_scene(dir / "videos" / media_stem(key), scene);
            expected_faces[key] = scene.speaker_boxes;
        }
    auto ls = run_localise(dir / "videos", dir / "localise", config);
    report.issues.insert(report.issues.end(), ls.issues.begin(), ls.issues.end());

    report.manifest = dir / "manifest.jsonl";
    auto ms = run_manifest(dir / "realign" / "edl.jsonl", dir / "localise", report.manifest, config);
    report.issues.insert(report.issues.end(), ms.issues.begin(), ms.issues.end());

    std::map<UtteranceKey, ManifestEntry> manifest;
    for (auto& e : load_manifest(report.manifest)) manifest[e.key] = e;
    for (const auto& sd : corpus) {
        SynthCheckReport::Dialogue dr;
        dr.key = sd.key;
        for (const auto& pu : sd.truth) {
            ++dr.utterances;
            const UtteranceKey key{sd.key.split, sd.key.dialogue_id, pu.utterance_id};
            auto it = manifest.find(key);
            if (it == manifest.end()) continue;
            const auto& e = it->second;
            if (e.realigned_start_ms && e.realigned_end_ms && std::abs(*e.realigned_start_ms - pu.start_ms) <= fd &&
                std::abs(*e.realigned_end_ms - pu.end_ms) <= fd)
                ++dr.boundaries_ok;
            const auto result_path = dir / "localise" / (media_stem(key) + ".json");
            if (e.status == EntryStatus::aligned && fs::exists(result_path) &&
                matches_speaker(active_speaker_from_json(read_json_file(result_path)), expected_faces[key]))
                ++dr.speakers_ok;
        }
        report.dialogues.push_back(dr);
    }
    return report;
}

} // namespace avrefine::synth

#endif // AVREFINE_SYNTH_HPP
