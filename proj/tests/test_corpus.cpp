#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>
#include <sstream>

#include "posbias/common.hpp"
#include "posbias/corpus.hpp"

using namespace posbias;
using namespace posbias::corpus;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
  std::vector<std::string> out;
  for (const Token& t : tokens) out.push_back(t.surface);
  return out;
}

}  // namespace

TEST_CASE("tokenize basic sentence") {
  const auto tokens = tokenize("Great food but the service was bad!");
  CHECK(surfaces(tokens) == std::vector<std::string>{"great", "food", "but", "the",
                                                     "service", "was", "bad", "!"});
  CHECK(tokens.size() == 8);
  // offsets index the original string
  CHECK(tokens[0].char_start == 0);
  CHECK(tokens[0].char_end == 5);
  CHECK(tokens[7].char_start == 34);
  CHECK(tokens[7].char_end == 35);
}

TEST_CASE("tokenize empty and punctuation-heavy input") {
  CHECK(tokenize("").empty());
  CHECK(surfaces(tokenize("well-made")) ==
        std::vector<std::string>{"well", "-", "made"});
  CHECK(surfaces(tokenize("a+b")) == std::vector<std::string>{"a", "+", "b"});
  CHECK(surfaces(tokenize("  \t\n ")).empty());
}

TEST_CASE("tokenize non-ascii") {
  const auto tokens = tokenize("Café time…");
  CHECK(surfaces(tokens) ==
        std::vector<std::string>{"café", "time", "…"});
  // offsets count code points, not bytes
  CHECK(tokens[0].char_end == 4);
  CHECK(tokens[1].char_start == 5);
}

TEST_CASE("tokens are ordered and non-overlapping") {
  Rng rng(12);
  const std::string alphabet = "ab c.,!x9 \xc3\xa9";
  for (int trial = 0; trial < 100; ++trial) {
    std::string text;
    for (std::size_t i = 0; i < 30; ++i) text += alphabet[rng.below(alphabet.size())];
    const auto tokens = tokenize(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      CHECK(tokens[i].char_start < tokens[i].char_end);
      if (i) CHECK(tokens[i - 1].char_end <= tokens[i].char_start);
    }
  }
}

static const char* kSampleXml = R"(<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="s1">
    <text>Great food but the service was bad!</text>
    <aspectTerms>
      <aspectTerm term="food" polarity="positive" from="6" to="10"/>
      <aspectTerm term="service" polarity="negative" from="19" to="26"/>
    </aspectTerms>
  </sentence>
  <sentence id="s2">
    <text>Nothing annotated here.</text>
  </sentence>
  <sentence id="s3">
    <text>The staff-member was conflicted.</text>
    <aspectTerms>
      <aspectTerm term="staff-member" polarity="conflict" from="4" to="16"/>
      <aspectTerm term="staff" polarity="neutral" from="4" to="7"/>
    </aspectTerms>
  </sentence>
</sentences>)";

TEST_CASE("semeval parsing: spans, conflict filtering, no-aspect sentences") {
  std::vector<std::string> warnings;
  const Dataset ds = parse_semeval_xml(kSampleXml, Domain::Restaurant,
                                       Split::Train, &warnings);
  REQUIRE(ds.size() == 3);  // conflict term dropped, s2 produces nothing
  CHECK(ds.domain == Domain::Restaurant);

  const Instance& food = ds.instances[0];
  CHECK(food.aspect_start == 1);
  CHECK(food.aspect_len == 1);
  CHECK(food.label == Polarity::Positive);
  CHECK(food.tokens[food.aspect_start].surface == "food");

  const Instance& service = ds.instances[1];
  CHECK(service.aspect_start == 4);
  CHECK(service.aspect_len == 1);
  CHECK(service.label == Polarity::Negative);

  // "staff" aligns with a token prefix of "staff-member": snapped + warned
  const Instance& staff = ds.instances[2];
  CHECK(staff.aspect_start == 1);
  CHECK(staff.aspect_len == 1);
  CHECK(staff.tokens[1].surface == "staff");
  CHECK_FALSE(warnings.empty());
}

TEST_CASE("semeval parsing: aspect term equals the covered span") {
  const Dataset ds =
      parse_semeval_xml(kSampleXml, Domain::Restaurant, Split::Train, nullptr);
  // detokenized span matches the term attribute up to casing for exact spans
  const Instance& food = ds.instances[0];
  std::string span;
  for (std::size_t i = food.aspect_start; i < food.aspect_start + food.aspect_len;
       ++i) {
    if (i > food.aspect_start) span += ' ';
    span += food.tokens[i].surface;
  }
  CHECK(span == "food");
}

TEST_CASE("semeval parsing: malformed XML raises a parse error") {
  CHECK_THROWS_AS(
      parse_semeval_xml("<sentences><sentence>", Domain::Laptop, Split::Train),
      ParseError);
  CHECK_THROWS_AS(parse_semeval_xml("<wrong/>", Domain::Laptop, Split::Train),
                  ParseError);
}

TEST_CASE("semeval parsing: entity decoding keeps offsets aligned") {
  const char* xml = R"(<sentences><sentence id="e">
    <text>I &quot;loved&quot; the food.</text>
    <aspectTerms><aspectTerm term="food" polarity="positive" from="14" to="18"/></aspectTerms>
  </sentence></sentences>)";
  std::vector<std::string> warnings;
  const Dataset ds = parse_semeval_xml(xml, Domain::Restaurant, Split::Test,
                                       &warnings);
  REQUIRE(ds.size() == 1);
  CHECK(ds.instances[0].tokens[ds.instances[0].aspect_start].surface == "food");
  CHECK(warnings.empty());
}

TEST_CASE("arts parsing: map and list layouts") {
  const char* map_doc = R"({
    "a1": {"sentence": "The screen is bad.", "term": "screen",
           "from": 4, "to": 10, "polarity": "negative"},
    "a2": {"text": "Good battery!", "aspect": "battery",
           "from": "5", "to": "12", "polarity": "positive"}
  })";
  const Dataset from_map = parse_arts(map_doc, Domain::Laptop);
  REQUIRE(from_map.size() == 2);
  CHECK(from_map.instances[0].id == "a1");
  CHECK(from_map.instances[0].label == Polarity::Negative);
  CHECK(from_map.instances[0].aspect_start == 1);
  CHECK(from_map.instances[1].tokens[from_map.instances[1].aspect_start].surface ==
        "battery");

  const char* list_doc = R"([
    {"sentence": "The screen is bad.", "term": "screen",
     "from": 4, "to": 10, "polarity": "negative"}
  ])";
  const Dataset from_list = parse_arts(list_doc, Domain::Laptop);
  REQUIRE(from_list.size() == 1);
  CHECK(from_list.instances[0].id == "0");
}

TEST_CASE("arts parsing: empty object, bad polarity, structural mismatch") {
  CHECK(parse_arts("{}", Domain::Laptop).size() == 0);

  std::vector<std::string> warnings;
  const char* bad_pol = R"({"x": {"sentence": "ok food", "term": "food",
    "from": 3, "to": 7, "polarity": "mixed"}})";
  const Dataset ds = parse_arts(bad_pol, Domain::Restaurant, &warnings);
  CHECK(ds.size() == 0);
  CHECK(warnings.size() == 1);

  CHECK_THROWS_AS(parse_arts("[1, 2]", Domain::Laptop), ParseError);
  CHECK_THROWS_AS(parse_arts("not json", Domain::Laptop), ParseError);
  CHECK_THROWS_AS(parse_arts("42", Domain::Laptop), ParseError);
}

TEST_CASE("split_dev partitions deterministically") {
  Dataset ds;
  ds.domain = Domain::Laptop;
  ds.split = Split::Train;
  for (int i = 0; i < 40; ++i) {
    Instance ins;
    ins.tokens = {{"tok", 0, 3}};
    ins.aspect_start = 0;
    ins.aspect_len = 1;
    ins.label = static_cast<Polarity>(i % 3);
    ins.id = "i" + std::to_string(i);
    ins.domain = Domain::Laptop;
    ds.instances.push_back(ins);
  }

  auto [train1, dev1] = split_dev(ds, 15, 7);
  CHECK(train1.size() == 25);
  CHECK(dev1.size() == 15);
  CHECK(train1.split == Split::Train);
  CHECK(dev1.split == Split::Dev);

  // partition: union of ids equals input, no overlap
  std::set<std::string> ids;
  for (const auto& i : train1.instances) ids.insert(i.id);
  for (const auto& i : dev1.instances) ids.insert(i.id);
  CHECK(ids.size() == 40);

  // determinism
  auto [train2, dev2] = split_dev(ds, 15, 7);
  REQUIRE(dev2.size() == dev1.size());
  for (std::size_t i = 0; i < dev1.size(); ++i)
    CHECK(dev1.instances[i].id == dev2.instances[i].id);

  // a different seed gives a different draw
  auto [train3, dev3] = split_dev(ds, 15, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < dev1.size(); ++i)
    any_diff = any_diff || dev1.instances[i].id != dev3.instances[i].id;
  CHECK(any_diff);

  // edges
  auto [train4, dev4] = split_dev(ds, 0, 1);
  CHECK(dev4.size() == 0);
  CHECK(train4.size() == 40);
  CHECK_THROWS_AS(split_dev(ds, 41, 0), std::invalid_argument);
}

TEST_CASE("load_embeddings filters by vocabulary and reports coverage") {
  std::istringstream file(
      "good 0.1 0.2 0.3\n"
      "bad -0.1 -0.2 -0.3\n"
      "broken 1 2\n"
      "ignored 9 9 9\n");
  const EmbeddingTable t =
      load_embeddings(file, {"good", "bad", "missing", "broken"}, 3, 42);
  CHECK(t.dimension == 3);
  CHECK(t.found == 2);
  CHECK(t.missing == 2);
  CHECK(t.lookup("good") == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(t.contains("bad"));
  CHECK_FALSE(t.contains("ignored"));

  // OOV fallback: total lookup, bounded values, stable under the seed
  const std::vector<double>& oov = t.lookup("missing");
  REQUIRE(oov.size() == 3);
  for (double v : oov) {
    CHECK(v >= -0.1);
    CHECK(v <= 0.1);
  }
  std::istringstream file2("good 0.1 0.2 0.3\n");
  const EmbeddingTable t2 = load_embeddings(file2, {"good"}, 3, 42);
  CHECK(t2.oov_vector == t.oov_vector);
}

TEST_CASE("load_embeddings error cases") {
  std::istringstream none("good 1 2 3\n");
  CHECK_THROWS_AS(load_embeddings(none, {"absent"}, 3), ParseError);

  // dimension mismatch on every line
  std::istringstream bad(
      "good 1 2\n"
      "bad 3 4\n");
  std::vector<std::string> warnings;
  CHECK_THROWS_AS(load_embeddings(bad, {"good", "bad"}, 3, 0, &warnings),
                  ParseError);
  CHECK(warnings.size() == 2);
}

TEST_CASE("jsonl round trip preserves tokens, span and label") {
  const Dataset ds =
      parse_semeval_xml(kSampleXml, Domain::Restaurant, Split::Train, nullptr);
  std::ostringstream out;
  dump_jsonl(ds, out);
  std::istringstream in(out.str());
  const Dataset back = load_jsonl(in, Split::Train);

  REQUIRE(back.size() == ds.size());
  CHECK(back.domain == ds.domain);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Instance& a = ds.instances[i];
    const Instance& b = back.instances[i];
    CHECK(surfaces(a.tokens) == surfaces(b.tokens));
    CHECK(a.aspect_start == b.aspect_start);
    CHECK(a.aspect_len == b.aspect_len);
    CHECK(a.label == b.label);
    CHECK(a.id == b.id);
  }
}

TEST_CASE("jsonl rejects bad rows") {
  std::istringstream bad_span(
      R"({"id":"x","domain":"laptop","tokens":["a"],"aspect_start":3,"aspect_len":1,"label":"neutral"})");
  CHECK_THROWS_AS(load_jsonl(bad_span, Split::Test), ParseError);

  std::istringstream not_json("{nope");
  CHECK_THROWS_AS(load_jsonl(not_json, Split::Test), ParseError);
}
