#include "support.hpp"

#include "pxp/error.hpp"

#include <doctest.h>

using namespace testing;
using pxp::Role;

TEST_CASE("tag names round-trip and parse exactly") {
    for (Tag t : pxp::all_tags) CHECK(pxp::parse_tag(pxp::tag_name(t)) == t);
    CHECK(pxp::tag_name(Tag::ratify) == "RATIFY");
    CHECK_FALSE(pxp::parse_tag("ratify"));
    CHECK_FALSE(pxp::parse_tag(""));
    CHECK_FALSE(pxp::parse_tag("RATIFY "));
}

TEST_CASE("decide_tag matches the decision table for every outcome, j and k") {
    for (int bits = 0; bits < 8; ++bits) {
        const pxp::ComparisonOutcome o{bool(bits & 1), bool(bits & 2), bool(bits & 4)};
        for (int k = 1; k <= 8; ++k) {
            for (int j = 2; j <= 12; ++j) {
                CAPTURE(bits);
                CAPTURE(j);
                CAPTURE(k);
                CHECK(pxp::decide_tag(o, j, k) == oracle_tag(o.match_incoming, o.agree_incoming, o.changed, j, k));
            }
        }
    }
}

TEST_CASE("decide_tag cell examples") {
    CHECK(pxp::decide_tag({true, true, false}, 2, 4) == Tag::ratify);
    CHECK(pxp::decide_tag({true, false, true}, 3, 4) == Tag::revise);
    CHECK(pxp::decide_tag({false, true, false}, 3, 4) == Tag::refute);
    CHECK(pxp::decide_tag({false, false, false}, 4, 4) == Tag::refute);
    CHECK(pxp::decide_tag({false, false, true}, 4, 4) == Tag::revise);
    CHECK(pxp::decide_tag({false, false, false}, 5, 4) == Tag::reject);
    CHECK(pxp::decide_tag({false, false, true}, 5, 4) == Tag::reject);
    CHECK(pxp::decide_tag({false, false, false}, 2, 1) == Tag::reject);
}

TEST_CASE("decide_tag never yields INIT and rejects bad arguments") {
    for (int bits = 0; bits < 8; ++bits) {
        for (int j = 2; j < 10; ++j) CHECK(pxp::decide_tag({bool(bits & 1), bool(bits & 2), bool(bits & 4)}, j, 3) != Tag::init);
    }
    CHECK_THROWS_AS(pxp::decide_tag({}, 1, 4), pxp::Error);
    CHECK_THROWS_AS(pxp::decide_tag({}, 3, 0), pxp::Error);
}

TEST_CASE("categorize") {
    CHECK(pxp::categorize(true, true) == pxp::Category::a);
    CHECK(pxp::categorize(true, false) == pxp::Category::b);
    CHECK(pxp::categorize(false, true) == pxp::Category::c);
    CHECK(pxp::categorize(false, false) == pxp::Category::d);
}

TEST_CASE("early REJECT is downgraded to REFUTE") {
    CHECK(pxp::downgrade_early_reject(Tag::reject, 2, 2) == Tag::refute);
    CHECK(pxp::downgrade_early_reject(Tag::reject, 3, 2) == Tag::reject);
    for (Tag t : {Tag::ratify, Tag::refute, Tag::revise}) CHECK(pxp::downgrade_early_reject(t, 1, 9) == t);
}

TEST_CASE("stop guard") {
    CHECK_FALSE(pxp::session_stopped(Tag::init, Tag::init, Role::machine));
    CHECK_FALSE(pxp::session_stopped(Tag::ratify, Tag::init, Role::machine));
    CHECK(pxp::session_stopped(Tag::ratify, Tag::ratify, Role::machine));
    CHECK(pxp::session_stopped(Tag::ratify, Tag::ratify, Role::human));
    CHECK(pxp::session_stopped(Tag::reject, Tag::refute, Role::machine));
    CHECK(pxp::session_stopped(Tag::refute, Tag::reject, Role::human));
    CHECK_FALSE(pxp::session_stopped(Tag::revise, Tag::ratify, Role::human));
}

TEST_CASE("session config validation names the field") {
    pxp::SessionConfig c;
    CHECK_NOTHROW(pxp::validate_session_config(c));
    c.k = 0;
    try {
        pxp::validate_session_config(c);
        FAIL("expected validation error");
    } catch (const pxp::Error& e) {
        CHECK(e.code() == pxp::ErrorCode::validation);
        CHECK(e.fields() == std::vector<std::string>{"session.k"});
    }
    c = {};
    c.n = 0;
    CHECK_THROWS_AS(pxp::validate_session_config(c), pxp::Error);
}

TEST_CASE("payload validation") {
    CHECK_THROWS_AS(pxp::initial_payload("", "e"), pxp::Error);
    CHECK_THROWS_AS(pxp::initial_payload("y", ""), pxp::Error);
    const auto p = pxp::initial_payload("y", "e");
    CHECK(p.tag == Tag::init);
}
