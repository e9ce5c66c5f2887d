#include "reference_stats.hpp"
#include "support.hpp"

#include "pxp/analyzer.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace testing;

namespace {

const std::vector<Tag> body_tags{Tag::ratify, Tag::refute, Tag::revise, Tag::reject};

std::vector<std::vector<Tag>> all_sequences(int max_length) {
    std::vector<std::vector<Tag>> out{{}};
    std::vector<std::vector<Tag>> frontier{{}};
    for (int len = 1; len <= max_length; ++len) {
        std::vector<std::vector<Tag>> next;
        for (const auto& s : frontier) {
            for (Tag t : body_tags) {
                auto grown = s;
                grown.push_back(t);
                next.push_back(grown);
            }
        }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return out;
}

std::vector<pxp::Transcript> random_transcripts(std::mt19937& rng, int count, int max_length) {
    std::vector<pxp::Transcript> out;
    for (int i = 0; i < count; ++i) {
        std::vector<Tag> tags{Tag::init};
        const int length = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_length));
        while (static_cast<int>(tags.size()) < length) tags.push_back(body_tags[rng() % body_tags.size()]);
        out.push_back(transcript_of("t" + std::to_string(i), tags));
    }
    return out;
}

}  // namespace

TEST_CASE("definitions on small cases") {
    CHECK(pxp::is_one_way({Tag::refute, Tag::ratify}));
    CHECK_FALSE(pxp::is_one_way({Tag::ratify, Tag::reject}));
    CHECK_FALSE(pxp::is_one_way({Tag::refute}));
    CHECK_FALSE(pxp::is_one_way({}));
    CHECK(pxp::is_strong({Tag::revise, Tag::ratify}));
    CHECK_FALSE(pxp::is_strong({}));
    CHECK_FALSE(pxp::is_strong({Tag::ratify, Tag::refute}));
    CHECK(pxp::is_ultra_strong({Tag::ratify, Tag::revise}));
    CHECK_FALSE(pxp::is_ultra_strong({Tag::ratify}));
}

TEST_CASE("classifier agrees with the definition checker on every short pair") {
    const auto seqs = all_sequences(4);
    long checked = 0;
    for (const auto& m : seqs) {
        const auto vm = oracle_verdict(m);
        for (const auto& h : seqs) {
            const auto vh = oracle_verdict(h);
            const auto v = pxp::classify({m, h});
            REQUIRE(v.machine.one_way == vm.one_way);
            REQUIRE(v.machine.strong == vm.strong);
            REQUIRE(v.machine.ultra == vm.ultra);
            REQUIRE(v.human.one_way == vh.one_way);
            REQUIRE(v.human.strong == vh.strong);
            REQUIRE(v.human.ultra == vh.ultra);
            REQUIRE(v.two_way == (vm.one_way && vh.one_way));
            ++checked;
        }
    }
    CHECK(checked == 341L * 341L);
}

TEST_CASE("category implications hold on random sessions") {
    std::mt19937 rng(3);
    for (const auto& t : random_transcripts(rng, 500, 12)) {
        const auto v = pxp::classify_session(t);
        for (const auto& a : {v.machine, v.human}) {
            if (a.ultra) CHECK(a.strong);
            if (a.strong) CHECK(a.one_way);
        }
        CHECK(v.length == static_cast<int>(t.messages.size()));
        const auto seqs = pxp::extract_sequences(t);
        const auto diff = static_cast<long>(seqs.machine_to_human.size() + 1) - static_cast<long>(seqs.human_to_machine.size());
        CHECK((diff == 0 || diff == 1));
    }
}

TEST_CASE("sequence extraction and termination") {
    const auto t = transcript_of("s", {Tag::init, Tag::refute, Tag::revise, Tag::ratify, Tag::ratify});
    const auto seqs = pxp::extract_sequences(t);
    CHECK(seqs.machine_to_human == std::vector<Tag>{Tag::revise, Tag::ratify});
    CHECK(seqs.human_to_machine == std::vector<Tag>{Tag::refute, Tag::ratify});
    const auto v = pxp::classify_session(t);
    CHECK(v.terminal == pxp::Termination::mutual_ratify);
    CHECK(v.machine.ultra);
    CHECK(v.human.one_way);
    CHECK_FALSE(v.human.strong);
    CHECK(pxp::classify_session(transcript_of("s", {Tag::init, Tag::refute, Tag::refute, Tag::refute, Tag::reject}))
              .terminal == pxp::Termination::reject_by_machine);
    CHECK(pxp::classify_session(transcript_of("s", {Tag::init, Tag::refute, Tag::refute, Tag::refute, Tag::refute,
                                                    Tag::reject}))
              .terminal == pxp::Termination::reject_by_human);
    CHECK(pxp::classify_session(transcript_of("s", {Tag::init, Tag::refute})).terminal == pxp::Termination::bound);
    CHECK(pxp::termination_name(pxp::Termination::mutual_ratify) == "mutual-ratify");
}

TEST_CASE("one-way curves match a linear scan") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const auto ts = random_transcripts(rng, 1 + static_cast<int>(rng() % 25), 12);
        for (int min_length : {0, 15}) {
            const auto human = pxp::intelligibility_curve(ts, pxp::Role::human, min_length);
            const auto machine = pxp::intelligibility_curve(ts, pxp::Role::machine, min_length);
            int longest = min_length;
            for (const auto& t : ts) longest = std::max(longest, static_cast<int>(t.messages.size()));
            CHECK(human == oracle_curve(ts, "h", longest));
            CHECK(machine == oracle_curve(ts, "m", longest));
        }
    }
}

TEST_CASE("machine performance curve") {
    std::vector<pxp::Transcript> ts;
    pxp::Transcript a{"a", {message("a", 1, Tag::init, "wrong", "e"), message("a", 2, Tag::refute, "x", "e"),
                            message("a", 3, Tag::revise, "Right", "e")}};
    pxp::Transcript b{"b", {message("b", 1, Tag::init, "right", "e")}};
    pxp::Transcript c{"c", {message("c", 1, Tag::init, "right", "e")}};
    ts = {a, b, c};
    const std::map<std::string, pxp::GroundTruth> truth{{"a", {"right", ""}}, {"b", {"right", ""}}};
    const auto curve = pxp::machine_performance_curve(ts, truth, pxp::exact_match, 4);
    REQUIRE(curve.size() == 4);
    CHECK(curve[0] == doctest::Approx(0.5));
    CHECK(curve[1] == doctest::Approx(0.5));
    CHECK(curve[2] == doctest::Approx(1.0));
    CHECK(curve[3] == doctest::Approx(1.0));
    CHECK(pxp::machine_performance_curve(ts, {}, pxp::exact_match).empty());
}

TEST_CASE("lower median") {
    CHECK(pxp::lower_median(std::vector<int>{}) == 0);
    CHECK(pxp::lower_median(std::vector<int>{4}) == 4);
    CHECK(pxp::lower_median(std::vector<int>{9, 1}) == 1);
    CHECK(pxp::lower_median(std::vector<int>{5, 1, 3}) == 3);
    CHECK(pxp::lower_median(std::vector<int>{4, 1, 3, 2}) == 2);
    std::mt19937 rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<int> v(1 + rng() % 9);
        for (auto& x : v) x = static_cast<int>(rng() % 20);
        const int m = pxp::lower_median(v);
        const auto below = std::count_if(v.begin(), v.end(), [&](int x) { return x < m; });
        const auto at_most = std::count_if(v.begin(), v.end(), [&](int x) { return x <= m; });
        CHECK(static_cast<std::size_t>(below) <= (v.size() - 1) / 2);
        CHECK(static_cast<std::size_t>(at_most) >= (v.size() + 1) / 2);
    }
}

TEST_CASE("reference statistics are realisable and consistent") {
    for (const auto& col : reference_stats()) {
        CAPTURE(col.name);
        CHECK(col.ultra_h <= col.strong_h);
        CHECK(col.strong_h <= col.one_way_h);
        CHECK(col.ultra_m <= col.strong_m);
        CHECK(col.strong_m <= col.one_way_m);
        CHECK(col.two_way <= std::min(col.one_way_h, col.one_way_m));
        CHECK(col.two_way >= col.one_way_h + col.one_way_m - col.total);
        const auto counts = pxp::count_verdicts(build_column(col));
        CHECK(counts.total == col.total);
        CHECK(counts.one_way_human == col.one_way_h);
        CHECK(counts.one_way_machine == col.one_way_m);
        CHECK(counts.two_way == col.two_way);
        CHECK(counts.strong_human == col.strong_h);
        CHECK(counts.strong_machine == col.strong_m);
        CHECK(counts.ultra_human == col.ultra_h);
        CHECK(counts.ultra_machine == col.ultra_m);
    }
}

TEST_CASE("summaries exclude failed sessions and flag running ones") {
    const auto good = transcript_of("a", {Tag::init, Tag::ratify, Tag::ratify});
    const auto failed = transcript_of("b", {Tag::init, Tag::ratify});
    const auto running = transcript_of("c", {Tag::init});
    const auto s = pxp::summarize_run({good, failed, running}, {}, {{"b", "failed"}, {"c", "running"}, {"d", "abandoned"}});
    CHECK(s.counts.total == 1);
    CHECK(s.excluded == 2);
    CHECK(s.incomplete == 1);
}

TEST_CASE("aggregation takes lower medians and carries curves forward") {
    std::vector<pxp::RunSummary> runs(3);
    for (int i = 0; i < 3; ++i) {
        runs[i].counts.total = 20;
        runs[i].counts.one_way_human = 10 + i * 3;
        runs[i].curve_human = std::vector<int>(static_cast<std::size_t>(2 + i), i);
    }
    runs[1].incomplete = 1;
    const auto report = pxp::aggregate_report(runs);
    CHECK(report.runs == 3);
    CHECK(report.median.one_way_human == 13);
    CHECK(report.proportion(report.median.one_way_human) == doctest::Approx(0.65));
    CHECK(report.partial);
    REQUIRE(report.curve_human.median.size() == 4);
    CHECK(report.curve_human.low[3] == 0.0);
    CHECK(report.curve_human.high[3] == 2.0);
    CHECK(report.curve_human.median[3] == 1.0);
    CHECK(pxp::RunReport{}.proportion(3) == 0.0);
}

TEST_CASE("rendered table carries the statistics rows") {
    pxp::RunSummary s;
    s.counts = pxp::count_verdicts(build_column(reference_stats()[0]));
    const auto report = pxp::aggregate_report({s});
    const auto text = pxp::render_table({{"RAD", report}});
    for (const char* label : {"Total sessions", "1-way intelligible", "2-way intelligible sessions:",
                              "Strong intelligible", "Ultra-Strong intelligible", "Human", "Machine"}) {
        CHECK(text.find(label) != std::string::npos);
    }
    CHECK(text.find("19 (0.95)") != std::string::npos);
    CHECK(text.find("15 (0.75)") != std::string::npos);
    const auto json = pxp::report_to_json(report);
    CHECK(json.dump().find("ultra-strong intelligible") != std::string::npos);
    const auto csv = pxp::curves_csv(report);
    CHECK(csv.rfind("index,human_one_way", 0) == 0);
}
