#ifndef AVREFINE_TESTS_ORACLES_HPP
#define AVREFINE_TESTS_ORACLES_HPP

// Slow, obviously-correct reference implementations. None of them shares code
// with the library beyond plain data types.

#include "avrefine/ctcseg.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle
{

/// Best score over every frame labelling that collapses (merge repeats, then
/// drop blanks) to `tokens`. Enumerates labellings directly, so it does not
/// depend on the blank-expanded state graph. Empty when no labelling exists.
inline std::optional<double> best_labelling_score(const avrefine::PosteriorMatrix& post, const std::vector<int>& tokens)
{
    const int frames = post.frames;
    const int vocab = post.vocab.size();
    std::optional<double> best;
    // matched: tokens consumed so far; last: label at the previous frame (-1 at start)
    const auto rec = [&](auto&& self, int t, std::size_t matched, int last, double score) -> void {
        if (tokens.size() - matched > static_cast<std::size_t>(frames - t)) return;
        if (t == frames) {
            if (matched == tokens.size() && (!best || score > *best)) best = score;
            return;
        }
        for (int l = 0; l < vocab; ++l) {
            const double s = score + post.at(t, l);
            if (l == 0) {
                self(self, t + 1, matched, l, s);
            } else if (l == last) {
                self(self, t + 1, matched, l, s); // same token continues
            } else if (matched < tokens.size() && tokens[matched] == l) {
                self(self, t + 1, matched + 1, l, s);
            }
        }
    };
    rec(rec, 0, 0, -1, 0.0);
    return best;
}

struct Subset
{
    std::vector<int> ids;
    long long weight = -1;
};

/// Exhaustive search over all 2^n subsets of `ids`: keep conflict-free ones,
/// maximise total weight, then fewest members, then smallest sorted id tuple.
inline Subset best_independent_set(const std::vector<int>& ids, const std::vector<std::pair<int, int>>& edges,
                                   const std::vector<int>& weight)
{
    const std::size_t n = ids.size();
    Subset best;
    for (unsigned long mask = 0; mask < (1ul << n); ++mask) {
        const auto in = [&](int id) {
            for (std::size_t i = 0; i < n; ++i)
                if (ids[i] == id) return ((mask >> i) & 1ul) != 0;
            return false;
        };
        bool ok = true;
        for (const auto& [a, b] : edges) ok = ok && !(in(a) && in(b));
        if (!ok) continue;
        Subset cur;
        cur.weight = 0;
        for (std::size_t i = 0; i < n; ++i)
            if ((mask >> i) & 1ul) {
                cur.ids.push_back(ids[i]);
                cur.weight += weight[i];
            }
        const bool better = cur.weight > best.weight ||
                            (cur.weight == best.weight &&
                             (cur.ids.size() < best.ids.size() || (cur.ids.size() == best.ids.size() && cur.ids < best.ids)));
        if (better) best = cur;
    }
    return best;
}

/// Compensated sum, used as the reference for plain means.
inline double neumaier_sum(const std::vector<double>& xs)
{
    double sum = 0, c = 0;
    for (double x : xs) {
        const double t = sum + x;
        c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    return sum + c;
}

/// Mean of the non-NaN values; NaN when there are none.
inline double mean_present(const std::vector<double>& xs)
{
    std::vector<double> present;
    for (double x : xs)
        if (!std::isnan(x)) present.push_back(x);
    if (present.empty()) return std::numeric_limits<double>::quiet_NaN();
    return neumaier_sum(present) / static_cast<double>(present.size());
}

/// Small random posterior instance over a vocabulary {blank, |, A, B, ...}.
struct CtcInstance
{
    avrefine::PosteriorMatrix post;
    std::vector<int> tokens;
};

inline avrefine::Vocabulary small_vocab(int size)
{
    std::vector<std::string> symbols{"<b>", "|"};
    for (int i = 0; static_cast<int>(symbols.size()) < size; ++i) symbols.push_back(std::string(1, static_cast<char>('A' + i)));
    return avrefine::Vocabulary(symbols);
}

inline avrefine::PosteriorMatrix random_posteriors(int frames, const avrefine::Vocabulary& vocab, std::mt19937_64& rng)
{
    avrefine::PosteriorMatrix pm;
    pm.frames = frames;
    pm.vocab = vocab;
    const auto v = static_cast<std::size_t>(vocab.size());
    std::normal_distribution<double> logit(0.0, 2.0);
    for (int t = 0; t < frames; ++t) {
        std::vector<double> row(v);
        double mx = -1e300;
        for (auto& x : row) mx = std::max(mx, x = logit(rng));
        double acc = 0;
        for (double x : row) acc += std::exp(x - mx);
        for (double x : row) pm.logprobs.push_back(static_cast<float>(x - mx - std::log(acc)));
    }
    return pm;
}

inline CtcInstance random_ctc_instance(std::mt19937_64& rng, int max_frames = 10, int max_tokens = 4, int max_vocab = 6)
{
    CtcInstance inst;
    const int v = std::uniform_int_distribution<int>(2, max_vocab)(rng);
    const int frames = std::uniform_int_distribution<int>(1, max_frames)(rng);
    const int n = std::uniform_int_distribution<int>(1, max_tokens)(rng);
    for (int i = 0; i < n; ++i) inst.tokens.push_back(std::uniform_int_distribution<int>(1, v - 1)(rng));
    inst.post = random_posteriors(frames, small_vocab(v), rng);
    return inst;
}

} // namespace oracle

#endif // AVREFINE_TESTS_ORACLES_HPP
