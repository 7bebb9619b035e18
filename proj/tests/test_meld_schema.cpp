#include "avrefine/meld_schema.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace avrefine;

namespace
{

const char* header = "Sr No.,Utterance,Speaker,Emotion,Sentiment,Dialogue_ID,Utterance_ID,Season,Episode,StartTime,EndTime\n";

std::string row(int dia, int utt, const std::string& text, const std::string& start, const std::string& end,
                const std::string& emotion = "neutral")
{
    std::ostringstream os;
    os << "1,\"" << text << "\",Ross," << emotion << ",neutral," << dia << "," << utt << ",8,21," << start << ","
       << end << "\n";
    return os.str();
}

} // namespace

TEST(Timestamp, ParsesHoursMinutesSecondsMillis)
{
    EXPECT_EQ(parse_timestamp("0:16:41.126"), 1001126);
    EXPECT_EQ(parse_timestamp("0:17:04.858"), 1024858);
    EXPECT_EQ(parse_timestamp("0:16:48,800"), 1008800);
    EXPECT_EQ(parse_timestamp(" 12:00:00.000 "), 43'200'000);
}

TEST(Timestamp, RejectsMalformedInput)
{
    for (const char* bad : {"16:41.126", "0:16:41", "0:16:41.12", "0:6:41.126", "0:60:00.000", "0:00:61.000",
                            "a:00:00.000", ""})
        EXPECT_THROW(parse_timestamp(bad, "StartTime"), ParseError) << bad;
    try {
        parse_timestamp("0:16:41", "StartTime");
    } catch (const ParseError& e) {
        EXPECT_EQ(e.field(), "StartTime");
    }
}

TEST(Timestamp, FormatRoundTrips)
{
    for (Millis ms : {Millis{0}, Millis{1001126}, Millis{1024858}, Millis{3'600'000 * 11 + 59'999}})
        EXPECT_EQ(parse_timestamp(format_timestamp(ms)), ms);
}

TEST(Csv, HandlesQuotesCrlfAndBom)
{
    const auto rows = parse_csv("\xEF\xBB\xBF" "a,b,c\r\n\"x, y\",\"say \"\"hi\"\"\",\"two\nlines\"\r\n");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][0], "a");
    EXPECT_EQ(rows[1][0], "x, y");
    EXPECT_EQ(rows[1][1], "say \"hi\"");
    EXPECT_EQ(rows[1][2], "two\nlines");
    EXPECT_THROW(parse_csv("a,\"open\n"), SchemaError);
}

TEST(Records, ParsesRowsAndKeys)
{
    const auto res = parse_records(std::string(header) + row(0, 5, "Oh, hi!", "0:16:41.126", "0:16:44.337"), Split::train);
    ASSERT_TRUE(res.errors.empty());
    ASSERT_EQ(res.records.size(), 1u);
    const auto& r = res.records[0];
    EXPECT_EQ(r.key(), (UtteranceKey{Split::train, 0, 5}));
    EXPECT_EQ(r.text, "Oh, hi!");
    EXPECT_EQ(r.start_ms, 1001126);
    EXPECT_EQ(r.end_ms, 1004337);
    EXPECT_EQ(r.season, 8);
    EXPECT_EQ(r.episode, 21);
}

TEST(Records, MissingColumnIsASchemaError)
{
    EXPECT_THROW(parse_records("Utterance,Speaker\nhi,Ross\n", Split::dev), SchemaError);
}

TEST(Records, BadRowsAreReportedNotFatal)
{
    const std::string csv = std::string(header) + row(1, 0, "fine", "0:00:01.000", "0:00:02.000") +
                            row(1, 1, "bad emotion", "0:00:02.000", "0:00:03.000", "bored") +
                            row(1, 2, "reversed", "0:00:05.000", "0:00:04.000") +
                            row(1, 0, "duplicate", "0:00:06.000", "0:00:07.000") +
                            row(1, 3, "bad time", "0:00:0x.000", "0:00:09.000");
    const auto res = parse_records(csv, Split::test);
    EXPECT_EQ(res.records.size(), 1u);
    ASSERT_EQ(res.errors.size(), 4u);
    EXPECT_EQ(res.errors[0].row, 2u);
    EXPECT_NE(res.errors[0].message.find("bored"), std::string::npos);
}

TEST(Overrides, StripDescriptionHandlesNesting)
{
    EXPECT_EQ(strip_description("(Sighs) Oh, okay."), "Oh, okay.");
    EXPECT_EQ(strip_description("Fine [to Ross (quietly)] go away"), "Fine go away");
    EXPECT_EQ(strip_description("(leaves)"), "");
}

TEST(Overrides, EachActionAndDanglingKeys)
{
    std::vector<UtteranceRecord> recs;
    const auto add = [&](int dia, int utt, Millis start, std::string text) {
        UtteranceRecord r;
        r.dialogue_id = r.source_dialogue_id = dia;
        r.utterance_id = utt;
        r.start_ms = start;
        r.end_ms = start + 1000;
        r.text = std::move(text);
        recs.push_back(r);
    };
    add(446, 19, 50'000, "Hey.");
    add(447, 0, 10'000, "Hi.");
    add(447, 1, 12'000, "What?");
    add(309, 0, 0, "(Walks in) Hello");
    add(125, 3, 0, "whatever");

    OverrideList list{{Split::train, 446, 19, OverrideAction::reassign_dialogue, "447"},
                      {Split::train, 309, 0, OverrideAction::strip_description, ""},
                      {Split::train, 125, 3, OverrideAction::drop, "corrupted"},
                      {Split::train, 111, std::nullopt, OverrideAction::resort_dialogue, ""},
                      {Split::dev, 1, 1, OverrideAction::drop, ""}};
    auto [kept, report] = apply_overrides(recs, list);
    EXPECT_EQ(kept.size(), 4u);
    ASSERT_EQ(report.dropped.size(), 1u);
    EXPECT_EQ(report.dropped[0].dialogue_id, 125);
    EXPECT_EQ(report.dangling(), 2u);

    const auto dialogues = group_dialogues(kept);
    const auto it = std::find_if(dialogues.begin(), dialogues.end(),
                                 [](const Dialogue& d) { return d.key.dialogue_id == 447; });
    ASSERT_NE(it, dialogues.end());
    ASSERT_EQ(it->utterances.size(), 3u);
    EXPECT_EQ(it->utterances[0].utterance_id, 19);
    EXPECT_EQ(it->utterances[0].key().dialogue_id, 446); // output keyed by the input row
    EXPECT_EQ(it->utterances[1].utterance_id, 0);
    const auto s = std::find_if(kept.begin(), kept.end(), [](const auto& r) { return r.dialogue_id == 309; });
    EXPECT_EQ(s->text, "Hello");
}

TEST(Overrides, JsonRoundTripAndShippedList)
{
    std::ifstream is(std::string(AVREFINE_DATA_DIR) + "/default_overrides.json");
    ASSERT_TRUE(is);
    const auto list = overrides_from_json(nlohmann::json::parse(is));
    EXPECT_EQ(list.size(), 16u);
    nlohmann::json again = nlohmann::json::array();
    for (const auto& o : list) again.push_back(to_json(o));
    EXPECT_EQ(overrides_from_json(again).size(), list.size());
    EXPECT_THROW(overrides_from_json(nlohmann::json::parse(R"([{"split":"train","dialogue_id":1,"action":"drop"}])")),
                 SchemaError);
    EXPECT_THROW(overrides_from_json(nlohmann::json::parse(R"([{"split":"train","dialogue_id":1,"utterance_id":1,"action":"nuke"}])")),
                 SchemaError);
}

TEST(Dialogues, GroupedAndChronological)
{
    std::vector<UtteranceRecord> recs(3);
    recs[0].dialogue_id = 2, recs[0].utterance_id = 0, recs[0].start_ms = 500;
    recs[1].dialogue_id = 1, recs[1].utterance_id = 1, recs[1].start_ms = 100;
    recs[2].dialogue_id = 1, recs[2].utterance_id = 0, recs[2].start_ms = 900;
    const auto d = group_dialogues(recs);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].key.dialogue_id, 1);
    EXPECT_EQ(d[0].utterances[0].utterance_id, 1); // earlier start first, whatever the id
}

TEST(Enums, CaseInsensitiveLookup)
{
    EXPECT_EQ(emotion_from_string("Joy"), Emotion::joy);
    EXPECT_EQ(split_from_string("DEV"), Split::dev);
    EXPECT_FALSE(sentiment_from_string("meh"));
}
