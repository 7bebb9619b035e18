#include "avrefine/synth.hpp"
#include "avrefine/tracks.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace avrefine;

namespace
{

FaceDetection det(int frame, double x, double y, double w = 100)
{
    return {frame, {x, y, x + w, y + w}, 0.9};
}

using Chain = std::vector<std::pair<int, int>>;

std::set<Chain> as_runs(const std::vector<FaceTrack>& tracks)
{
    std::set<Chain> out;
    for (const auto& t : tracks) {
        Chain r;
        for (const auto& e : t.entries) r.emplace_back(e.frame, e.detection_index);
        out.insert(r);
    }
    return out;
}

} // namespace

TEST(Iou, Basics)
{
    const Box a{0, 0, 10, 10}, b{5, 0, 15, 10}, c{20, 20, 30, 30};
    EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
    EXPECT_DOUBLE_EQ(iou(a, b), 50.0 / 150.0);
    EXPECT_DOUBLE_EQ(iou(a, c), 0.0);
    EXPECT_DOUBLE_EQ(iou(a, Box{10, 0, 20, 10}), 0.0); // touching edges
}

TEST(Linking, ChainsOverlappingBoxes)
{
    std::vector<std::vector<FaceDetection>> frames{
        {det(0, 300, 0), det(0, 0, 0)},
        {det(1, 2, 1), det(1, 302, 0)},
        {det(2, 4, 2)},
        {},
        {det(4, 4, 2)},
    };
    const auto tracks = link_detections(frames, 0.33);
    ASSERT_EQ(tracks.size(), 3u);
    EXPECT_EQ(tracks[0].entries.size(), 3u); // leftmost face first
    EXPECT_EQ(tracks[0].entries[0].box.x1, 0);
    EXPECT_EQ(tracks[0].entries[1].detection_index, 0);
    EXPECT_EQ(tracks[1].entries[0].box.x1, 300);
    EXPECT_EQ(tracks[2].first_frame(), 4); // a gap ends the track
}

TEST(Linking, GreedyTakesHighestIouFirst)
{
    // both new boxes overlap the old one; the closer one continues the track
    std::vector<std::vector<FaceDetection>> frames{{det(0, 0, 0)}, {det(1, 30, 0), det(1, 5, 0)}};
    const auto tracks = link_detections(frames, 0.33);
    ASSERT_EQ(tracks.size(), 2u);
    EXPECT_EQ(tracks[0].entries.size(), 2u);
    EXPECT_EQ(tracks[0].entries[1].box.x1, 5);
}

TEST(Linking, ThresholdIsStrict)
{
    // IoU exactly 1/3: 100x100 boxes offset by 50 give 5000 / 15000
    std::vector<std::vector<FaceDetection>> frames{{det(0, 0, 0)}, {det(1, 50, 0)}};
    EXPECT_EQ(link_detections(frames, 1.0 / 3.0).size(), 2u);
    EXPECT_EQ(link_detections(frames, 0.33).size(), 1u);
}

TEST(Linking, RejectsBadInput)
{
    EXPECT_THROW(link_detections({}, 0.0), RangeError);
    EXPECT_THROW(link_detections({}, 1.0), RangeError);
    std::vector<std::vector<FaceDetection>> frames{{{0, {5, 5, 5, 10}, 1.0}}};
    EXPECT_THROW(link_detections(frames, 0.33), ValidationError);
}

TEST(Linking, RecoversSyntheticIdentities)
{
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto stream = synth::make_detection_stream(6, 100, 0.33, seed);
        const auto tracks = link_detections(stream.per_frame, 0.33);
        const std::set<Chain> truth(stream.identities.begin(), stream.identities.end());
        ASSERT_EQ(as_runs(tracks), truth) << "seed " << seed;
    }
}

TEST(DetectionsIo, RoundTripWithMissingFrames)
{
    std::vector<std::vector<FaceDetection>> frames{{det(0, 1.5, 2.25)}, {}, {det(2, 3, 4), det(2, 200, 4)}};
    std::stringstream ss;
    write_detections(ss, frames);
    EXPECT_EQ(read_detections(ss), frames);

    std::stringstream sparse(R"({"frame": 2, "boxes": [{"x1": 0, "y1": 0, "x2": 1, "y2": 1}]})" "\n");
    const auto got = read_detections(sparse);
    ASSERT_EQ(got.size(), 3u);
    EXPECT_TRUE(got[0].empty());
    EXPECT_DOUBLE_EQ(got[2][0].detector_confidence, 1.0);

    std::stringstream dup(R"({"frame": 0, "boxes": [{"x1": 0, "y1": 0, "x2": 1, "y2": 1}]})" "\n"
                          R"({"frame": 0, "boxes": [{"x1": 0, "y1": 0, "x2": 1, "y2": 1}]})" "\n");
    EXPECT_THROW(read_detections(dup), SchemaError);
    std::stringstream flat(R"({"frame": 0, "boxes": [{"x1": 0, "y1": 0, "x2": 0, "y2": 1}]})" "\n");
    EXPECT_THROW(read_detections(flat), SchemaError);
}
