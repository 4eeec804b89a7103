#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "kelm/lexicon.hpp"
#include "kelm/text.hpp"
#include "kelm/uket.hpp"

using namespace kelm;

namespace {

KnowledgeGraph from_string(const std::string& text) {
  std::istringstream is(text);
  return parse_triples(is, "<memory>");
}

EmbeddingTable all_embedded(const KnowledgeGraph& g, int d = 3) {
  EmbeddingTable t;
  t.dimension = d;
  for (int e = 0; e < g.entity_count(); ++e)
    t.entity_vectors[e] = std::vector<double>(static_cast<size_t>(d), 0.25 * (e + 1));
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("linking");

TEST_CASE("tokenize lays out [CLS] Q [SEP] P [SEP]") {
  auto t = tokenize("who won", std::nullopt, "Ford won.", 64);
  std::vector<std::string> expect = {"[CLS]", "who", "won", "[SEP]", "ford", "won", ".", "[SEP]"};
  CHECK(t.tokens == expect);
  CHECK(t.segments[0] == Segment::CLS);
  CHECK(t.segments[1] == Segment::QUESTION);
  CHECK(t.segments[4] == Segment::PASSAGE);
}

TEST_CASE("answer segment appears only when an answer is given") {
  auto with = tokenize("q", std::string("maybe"), "text here", 64);
  auto without = tokenize("q", std::nullopt, "text here", 64);
  CHECK(std::count(with.segments.begin(), with.segments.end(), Segment::ANSWER) == 1);
  CHECK(std::count(without.segments.begin(), without.segments.end(), Segment::ANSWER) == 0);
}

TEST_CASE("truncation keeps the layout and ends with [SEP]") {
  std::string passage;
  for (int i = 0; i < 20; ++i) passage += "w" + std::to_string(i) + " ";
  auto t = tokenize("who won", std::nullopt, passage, 8);
  CHECK(t.size() == 8);
  CHECK(t.tokens.back() == "[SEP]");
  CHECK(t.tokens[3] == "[SEP]");

  // question alone exceeding the budget is an error
  CHECK_THROWS_AS(tokenize("a b c d e f", std::nullopt, "p", 8), Error);
  CHECK_THROWS_AS(tokenize("q", std::nullopt, "", 32), Error);
}

TEST_CASE("char offsets are non-overlapping and increasing") {
  auto t = tokenize("who won the race", std::string("ford"), "Ford won. Nixon lost!", 64);
  for (int i = 1; i < t.size(); ++i) {
    CHECK(t.char_offsets[static_cast<size_t>(i)].first >= t.char_offsets[static_cast<size_t>(i - 1)].second);
    CHECK(t.char_offsets[static_cast<size_t>(i)].second >= t.char_offsets[static_cast<size_t>(i)].first);
  }
  // passage offsets recover the original surface
  const std::string passage = "Ford won. Nixon lost!";
  for (int i = 0; i < t.size(); ++i) {
    if (!t.is_passage(i)) continue;
    auto [s, e] = t.char_offsets[static_cast<size_t>(i)];
    std::string surface = passage.substr(static_cast<size_t>(s - t.passage_char_base),
                                         static_cast<size_t>(e - s));
    for (auto& c : surface) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    CHECK(surface == t.tokens[static_cast<size_t>(i)]);
  }
}

TEST_CASE("lexicon groups entities sharing a surface") {
  auto g = from_string("ban.n.04\thypernym\tprohibition.n.01\nban.v.02\thypernym\tforbid.v.01\n");
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  REQUIRE(lex.count("ban"));
  CHECK(lex["ban"] == std::vector<int>{*g.entity_id("ban.n.04"), *g.entity_id("ban.v.02")});
}

TEST_CASE("underscores become spaces in surfaces") {
  auto g = from_string("new_york.n.01\tinstance_of\tcity.n.01\n");
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  CHECK(lex.count("new york"));
  CHECK(normalize_entity_name("new_york.n.01", NameNormalizer::WordNet) == "new york");
  CHECK(normalize_entity_name("Concept_foo", NameNormalizer::Plain) == "concept foo");
  CHECK(normalize_entity_name("plain.n.01", NameNormalizer::Plain) == "plain.n.01");
}

TEST_CASE("lexicon matches an independent group-by oracle on 30 entities") {
  std::string file;
  std::map<std::string, std::set<std::string>> oracle;
  for (int i = 0; i < 30; ++i) {
    const std::string surface = "word" + std::to_string(i % 10);
    const std::string name = surface + ".n.0" + std::to_string(i / 10 + 1);
    file += name + "\trel\tsink.n.01\n";
    oracle[surface].insert(name);
  }
  auto g = from_string(file);
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  for (const auto& [surface, names] : oracle) {
    REQUIRE(lex.count(surface));
    std::set<std::string> got;
    for (int id : lex[surface]) got.insert(g.entity_name(id));
    CHECK(got == names);
  }
}

TEST_CASE("every unambiguous word becomes a single-token mention") {
  auto g = from_string(
      "ford.n.05\thypernym\tpresident.n.01\npardon.v.02\thypernym\tforgive.v.01\n"
      "nixon.n.01\thypernym\tpresident.n.01\n");
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("who", std::nullopt, "ford pardoned nixon", 32);
  // "pardoned" does not match "pardon" (no stemming); use exact surfaces
  auto t2 = tokenize("who", std::nullopt, "ford pardon nixon", 32);
  auto mentions = find_mentions(t2, lex, 1);
  REQUIRE(mentions.size() == 3);
  for (const auto& m : mentions) CHECK(m.first_token == m.last_token);
  CHECK(mentions[0].surface == "ford");
  CHECK(mentions[1].surface == "pardon");
  CHECK(mentions[2].surface == "nixon");
  CHECK(find_mentions(t, lex, 1).size() == 2);
}

TEST_CASE("greedy longest match wins over nested surfaces") {
  auto g = from_string("new_york.n.01\tr\tcity.n.01\nyork.n.01\tr\tcity.n.01\n");
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("where", std::nullopt, "i love new york weather", 32);
  auto mentions = find_mentions(t, lex, 1);
  REQUIRE(mentions.size() == 1);
  CHECK(mentions[0].surface == "new york");
  CHECK(mentions[0].last_token - mentions[0].first_token == 1);
}

TEST_CASE("no lexicon hits yields no mentions; spans are disjoint and sorted") {
  auto g = from_string("zebra.n.01\tr\tanimal.n.01\n");
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("what", std::nullopt, "nothing matches here", 32);
  CHECK(find_mentions(t, lex, 1).empty());

  auto g2 = from_string("a.n.01\tr\tb.n.01\nb.n.01\tr\ta.n.01\na_b.n.01\tr\tb.n.01\n");
  auto lex2 = build_lexicon(g2, NameNormalizer::WordNet);
  auto t2 = tokenize("q", std::nullopt, "a b a b a", 32);
  auto mentions = find_mentions(t2, lex2, 1);
  int prev_end = -1;
  for (const auto& m : mentions) {
    CHECK(m.first_token > prev_end);
    prev_end = m.last_token;
  }
}

TEST_CASE("special tokens are never matched") {
  auto g = from_string("sep.n.01\tr\tcls.n.01\ncls.n.01\tr\tsep.n.01\n");
  Lexicon lex;
  lex["[sep]"] = {0};
  lex["[cls]"] = {1};
  auto t = tokenize("q", std::nullopt, "text only", 32);
  CHECK(find_mentions(t, lex, 1).empty());
}

TEST_CASE("uket counts: one mention, two candidates, K=0") {
  auto g = from_string("ford.n.05\tr\tx.n.01\nford.n.07\tr\ty.n.01\n");
  auto table = all_embedded(g);
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("who", std::nullopt, "ford raced", 32);
  auto mentions = find_mentions(t, lex, 1);
  REQUIRE(mentions.size() == 1);
  UketOptions opt;
  opt.k_hops = 0;
  auto uket = build_uket(t, {mentions}, {&g}, {&table}, opt);
  REQUIRE(uket.layers.size() == 1);
  CHECK(uket.layers[0].subgraph.nodes.size() == 2);
  // the mention's token has 2 candidate edges plus the sentinel
  int token_edges = 0;
  for (const auto& e : uket.layers[0].link_edges)
    if (e.token == mentions[0].first_token) ++token_edges;
  CHECK(token_edges == 3);
}

TEST_CASE("zero mentions leaves the text graph intact and the KG empty") {
  auto g = from_string("a.n.01\tr\tb.n.01\n");
  auto table = all_embedded(g);
  auto t = tokenize("q", std::nullopt, "nothing here", 32);
  auto uket = build_uket(t, {{}}, {&g}, {&table}, UketOptions{});
  CHECK(uket.token_count == t.size());
  CHECK(uket.layers[0].subgraph.nodes.empty());
  CHECK(uket.layers[0].link_edges.empty());
}

TEST_CASE("two-sense fixture matches the hand-enumerated neighborhood union") {
  // ford as president (neighbors: nixon, president) and as car maker
  // (neighbors: automaker, model_t)
  auto g = from_string(
      "ford.n.05\tsucceeded\tnixon.n.01\n"
      "president.n.01\thypernym\tford.n.05\n"
      "ford.n.03\tproduces\tmodel_t.n.01\n"
      "automaker.n.01\thypernym\tford.n.03\n"
      "nixon.n.01\tr\tpresident.n.01\n");
  auto table = all_embedded(g);
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("who", std::nullopt, "ford pardoned him", 32);
  auto mentions = find_mentions(t, lex, 1);
  REQUIRE(mentions.size() == 1);
  CHECK(mentions[0].candidates.size() == 2);

  UketOptions opt;
  opt.k_hops = 1;
  auto uket = build_uket(t, {mentions}, {&g}, {&table}, opt);
  std::set<std::string> got;
  for (int node : uket.layers[0].subgraph.nodes) got.insert(g.entity_name(node));
  std::set<std::string> expect = {"ford.n.05", "ford.n.03",    "nixon.n.01",
                                  "president.n.01", "model_t.n.01", "automaker.n.01"};
  CHECK(got == expect);
}

TEST_CASE("multi-token mentions share candidates across their tokens") {
  auto g = from_string("new_york.n.01\tr\tcity.n.01\nnew_york.n.02\tr\tstate.n.01\n");
  auto table = all_embedded(g);
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("where", std::nullopt, "new york is big", 32);
  auto mentions = find_mentions(t, lex, 1);
  REQUIRE(mentions.size() == 1);
  auto uket = build_uket(t, {mentions}, {&g}, {&table}, UketOptions{});
  const auto& layer = uket.layers[0];
  CHECK(layer.token_candidates[static_cast<size_t>(mentions[0].first_token)] ==
        layer.token_candidates[static_cast<size_t>(mentions[0].last_token)]);
  CHECK(layer.covered[static_cast<size_t>(mentions[0].first_token)] == 1);
  // uncovered tokens have no link edges
  for (const auto& e : layer.link_edges)
    CHECK(layer.covered[static_cast<size_t>(e.token)] == 1);
}

TEST_CASE("mention candidates all appear among subgraph seeds") {
  auto g = from_string(
      "bank.n.01\tr\triver.n.01\nbank.n.02\tr\tmoney.n.01\nnote.n.01\tr\tmoney.n.01\n");
  auto table = all_embedded(g);
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("what", std::nullopt, "the bank issued a note", 32);
  auto mentions = find_mentions(t, lex, 1);
  auto uket = build_uket(t, {mentions}, {&g}, {&table}, UketOptions{.k_hops = 1});
  const auto& sg = uket.layers[0].subgraph;
  std::set<int> seeds;
  for (int idx : sg.seed_indices) seeds.insert(sg.nodes[static_cast<size_t>(idx)]);
  for (const auto& m : mentions)
    for (int c : m.candidates) CHECK(seeds.count(c) == 1);
}

TEST_CASE("build_uket is deterministic") {
  auto g = from_string(
      "bank.n.01\tr\triver.n.01\nbank.n.02\tr\tmoney.n.01\nnote.n.01\tr\tmoney.n.01\n");
  auto table = all_embedded(g);
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("what", std::nullopt, "the bank issued a note", 32);
  auto mentions = find_mentions(t, lex, 1);
  auto one = build_uket(t, {mentions}, {&g}, {&table}, UketOptions{.k_hops = 1});
  auto two = build_uket(t, {mentions}, {&g}, {&table}, UketOptions{.k_hops = 1});
  CHECK(one.layers[0].subgraph.nodes == two.layers[0].subgraph.nodes);
  REQUIRE(one.layers[0].link_edges.size() == two.layers[0].link_edges.size());
  for (size_t i = 0; i < one.layers[0].link_edges.size(); ++i) {
    CHECK(one.layers[0].link_edges[i].token == two.layers[0].link_edges[i].token);
    CHECK(one.layers[0].link_edges[i].node == two.layers[0].link_edges[i].node);
  }
}

TEST_CASE("unembedded candidates leave sentinel-only coverage") {
  auto g = from_string("ghost.n.01\tr\tspirit.n.01\n");
  EmbeddingTable table;  // nothing embedded
  table.dimension = 3;
  auto lex = build_lexicon(g, NameNormalizer::WordNet);
  auto t = tokenize("what", std::nullopt, "a ghost appeared", 32);
  auto mentions = find_mentions(t, lex, 1);
  REQUIRE(mentions.size() == 1);
  auto uket = build_uket(t, {mentions}, {&g}, {&table}, UketOptions{});
  const auto& layer = uket.layers[0];
  CHECK(layer.covered[static_cast<size_t>(mentions[0].first_token)] == 1);
  CHECK(layer.token_candidates[static_cast<size_t>(mentions[0].first_token)].empty());
  REQUIRE(layer.link_edges.size() == 1);
  CHECK(layer.link_edges[0].node == kSentinel);
}

TEST_SUITE_END();
