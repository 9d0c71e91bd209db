#include <set>

#include "doctest.h"
#include "reticgen/environment.hpp"
#include "reticgen/error.hpp"
#include "support.hpp"

using namespace reticgen;
using testing::tokens;

TEST_CASE("valid actions follow the slot layout") {
  auto env = testing::tiny_env();
  auto mask = env.valid_actions(env.initial_state());
  std::set<std::string> allowed;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) allowed.insert(env.vocabulary()[i].id);
  }
  CHECK(allowed == std::set<std::string>{"N1", "N2", "N3"});

  AssemblyState s{tokens(env, {"N2", "N5"})};
  mask = env.valid_actions(s);
  allowed.clear();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) allowed.insert(env.vocabulary()[i].id);
  }
  CHECK(allowed == std::set<std::string>{"E1", "E2"});
}

TEST_CASE("single edge slot has a single valid action") {
  auto vocab = Vocabulary::load(testing::fixture("vocabulary.txt"));
  auto topo = Topology::parse("schema reticgen-topology 1\nname t\nedges true\nnode N1 N2\nedge E1\n", vocab);
  AssemblyEnv env(vocab, topo);
  auto mask = env.valid_actions(AssemblyState{tokens(env, {"N1"})});
  int count = 0;
  for (bool b : mask) count += b;
  CHECK(count == 1);
  CHECK(mask[static_cast<std::size_t>(env.vocabulary().index_of("E1"))]);
}

TEST_CASE("terminal counts and enumeration") {
  auto env = testing::tiny_env();
  CHECK(env.terminal_count() == 12);
  auto all = env.enumerate_terminals();
  REQUIRE(all.size() == 12);
  std::set<std::vector<int>> unique(all.begin(), all.end());
  CHECK(unique.size() == 12);
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(env.to_record(all[i]) == testing::tiny_table()[i].record);
    CHECK_FALSE(env.check_sequence(all[i]).has_value());
  }

  auto no_edges = testing::load_env("tiny6_noedges.topo");
  CHECK(no_edges.terminal_count() == 6);
  for (const auto& seq : no_edges.enumerate_terminals()) {
    CHECK(seq.size() == 2);
    for (int t : seq) CHECK(no_edges.vocabulary()[static_cast<std::size_t>(t)].kind == TokenKind::node);
  }

  auto vocab = Vocabulary::load(testing::fixture("vocabulary.txt"));
  AssemblyEnv four(vocab, Topology::parse("schema reticgen-topology 1\nname q\nedges true\nnode N1 N2 N3 N4\n", vocab));
  CHECK(four.enumerate_terminals().size() == 4);
}

TEST_CASE("enumeration refuses past the bound") {
  auto env = testing::load_env("ffc.topo");
  CHECK(env.terminal_count() == 9600);
  CHECK(env.enumerate_terminals().size() == 9600);
  try {
    env.enumerate_terminals(1000);
    FAIL("expected refusal");
  } catch (const EnumerationLimitError& e) {
    CHECK(e.estimated_count() == 9600);
  }
}

TEST_CASE("stepping builds the example sequence") {
  auto env = testing::load_env("ffc.topo");
  const std::vector<std::string> ids{"N577", "N238", "N194", "E5", "E3", "E74"};
  auto s = env.step(env.initial_state(), env.vocabulary().index_of("N577"));
  CHECK(s.tokens == tokens(env, {"N577"}));
  for (std::size_t i = 1; i < ids.size(); ++i) {
    CHECK_FALSE(env.is_terminal(s));
    s = env.step(s, env.vocabulary().index_of(ids[i]));
  }
  CHECK(env.is_terminal(s));
  CHECK(env.to_record(s.tokens) == "ffc:N577,N238,N194,E5,E3,E74");
  CHECK(env.parse_record("ffc:N577,N238,N194,E5,E3,E74") == s.tokens);
  CHECK_THROWS_AS(env.valid_actions(s), ContractError);
  CHECK_THROWS_AS(env.step(s, 0), ContractError);
}

TEST_CASE("invalid actions are rejected") {
  auto env = testing::tiny_env();
  CHECK_THROWS_AS(env.step(env.initial_state(), env.vocabulary().index_of("E1")), ContractError);
  CHECK_THROWS_AS(env.step(env.initial_state(), env.vocabulary().index_of("N4")), ContractError);
  CHECK_THROWS_AS(env.step(env.initial_state(), -1), ContractError);
  CHECK_THROWS_AS(env.step(env.initial_state(), 1000), ContractError);
}

TEST_CASE("assembly records round-trip and reject bad input") {
  auto env = testing::tiny_env();
  for (const auto& seq : env.enumerate_terminals()) CHECK(env.parse_record(env.to_record(seq)) == seq);
  CHECK_THROWS_AS(env.parse_record("tiny:N1,N4,E9"), ValidationError);
  CHECK_THROWS_AS(env.parse_record("tiny:N1,N4,Q7"), ValidationError);
  CHECK_THROWS_AS(env.parse_record("ffc:N1,N4,E1"), ValidationError);
  CHECK_THROWS_AS(env.parse_record("N1,N4,E1"), ValidationError);
  CHECK_THROWS_AS(env.parse_record("tiny:N1,N4"), ValidationError);
  CHECK_THROWS_AS(env.to_record(tokens(env, {"N1", "N4"})), ContractError);
}

TEST_CASE("independent validator catches each constraint") {
  auto env = testing::tiny_env();
  CHECK(env.check_sequence(tokens(env, {"N1", "N4"})).has_value());               // count
  CHECK(env.check_sequence(tokens(env, {"N1", "E1", "N4"})).has_value());         // order
  CHECK(env.check_sequence(tokens(env, {"N4", "N1", "E1"})).has_value());         // compatibility
  CHECK_FALSE(env.check_sequence(tokens(env, {"N3", "N4", "E2"})).has_value());
}

TEST_CASE("trajectory states are prefixes") {
  Trajectory t;
  t.actions = {2, 5, 1};
  auto states = t.states();
  REQUIRE(states.size() == 4);
  CHECK(states[0].tokens.empty());
  CHECK(states[3].tokens == t.actions);
}

TEST_CASE("vocabulary file validation carries line numbers") {
  CHECK_THROWS_WITH_AS(Vocabulary::parse("schema reticgen-vocabulary 1\nN1 node 10 5\nN1 node 3 3\n", "v.txt"),
                       doctest::Contains("v.txt:3"), ValidationError);
  CHECK_THROWS_WITH_AS(Vocabulary::parse("schema reticgen-vocabulary 1\nE1 node 10 5\n", "v.txt"),
                       doctest::Contains("v.txt:2"), ValidationError);
  CHECK_THROWS_WITH_AS(Vocabulary::parse("schema reticgen-vocabulary 1\nN1 node -1 5\n", "v.txt"),
                       doctest::Contains("v.txt:2"), ValidationError);
  CHECK_THROWS_WITH_AS(Vocabulary::parse("schema reticgen-vocabulary 1\nN1 node x 5\n", "v.txt"),
                       doctest::Contains("v.txt:2"), ValidationError);
  CHECK_THROWS_AS(Vocabulary::parse("schema reticgen-vocabulary 2\nN1 node 1 5\n"), ValidationError);
  CHECK_THROWS_AS(Vocabulary::parse("N1 node 1 5\n"), ValidationError);
}

TEST_CASE("topology file validation") {
  auto vocab = Vocabulary::load(testing::fixture("vocabulary.txt"));
  const std::string head = "schema reticgen-topology 1\nname t\nedges true\n";
  CHECK_THROWS_WITH_AS(Topology::parse(head + "edge E1\nnode N1\n", vocab, "t.topo"), doctest::Contains("t.topo:5"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(Topology::parse(head + "node N1 E1\n", vocab, "t.topo"), doctest::Contains("t.topo:4"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(Topology::parse(head + "node\n", vocab, "t.topo"), doctest::Contains("t.topo:4"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(Topology::parse(head + "node N1 N99\n", vocab, "t.topo"), doctest::Contains("N99"),
                       ValidationError);
  CHECK_THROWS_AS(Topology::parse("schema reticgen-topology 1\nname t\nedges false\nedge E1\n", vocab),
                  ValidationError);
  CHECK_THROWS_AS(Topology::load(testing::fixture("missing.topo"), vocab), ValidationError);
}

TEST_CASE("fingerprint tracks content and edge mode") {
  auto a = testing::tiny_env();
  auto b = testing::tiny_env();
  auto c = testing::load_env("tiny6_noedges.topo");
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}
