#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "posbias/common.hpp"
#include "posbias/tensor.hpp"

namespace posbias::corpus {

enum class Domain { Laptop, Restaurant };
enum class Split { Train, Dev, Test };
enum class Polarity { Negative = 0, Neutral = 1, Positive = 2 };

inline const char* to_string(Domain d) {
  return d == Domain::Laptop ? "laptop" : "restaurant";
}

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    default: return "test";
  }
}

inline const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::Negative: return "negative";
    case Polarity::Neutral: return "neutral";
    default: return "positive";
  }
}

inline std::optional<Polarity> polarity_from_string(const std::string& s) {
  if (s == "negative") return Polarity::Negative;
  if (s == "neutral") return Polarity::Neutral;
  if (s == "positive") return Polarity::Positive;
  return std::nullopt;
}

inline std::optional<Domain> domain_from_string(const std::string& s) {
  if (s == "laptop" || s == "lap") return Domain::Laptop;
  if (s == "restaurant" || s == "rest") return Domain::Restaurant;
  return std::nullopt;
}

/// One surface token. Offsets are 0-based character (code point) positions in
/// the original sentence, end exclusive.
struct Token {
  std::string surface;  // lowercased
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

/// One classification unit: a tokenized sentence with a single aspect span
/// [aspect_start, aspect_start + aspect_len) and its gold polarity.
struct Instance {
  std::vector<Token> tokens;
  std::size_t aspect_start = 0;
  std::size_t aspect_len = 1;
  Polarity label = Polarity::Neutral;
  std::string id;
  Domain domain = Domain::Laptop;

  std::size_t size() const { return tokens.size(); }
};

struct Dataset {
  Domain domain = Domain::Laptop;
  Split split = Split::Train;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
};

struct LabelCounts {
  std::size_t positive = 0;
  std::size_t neutral = 0;
  std::size_t negative = 0;

  std::size_t total() const { return positive + neutral + negative; }
};

inline LabelCounts label_counts(const Dataset& ds) {
  LabelCounts c;
  for (const Instance& ins : ds.instances) {
    switch (ins.label) {
      case Polarity::Positive: ++c.positive; break;
      case Polarity::Neutral: ++c.neutral; break;
      case Polarity::Negative: ++c.negative; break;
    }
  }
  return c;
}

// ---- tokenization ------------------------------------------------------

namespace detail {

/// Decodes UTF-8 into code points. Invalid bytes are kept as single code
/// points so offsets stay aligned with the input.
inline std::vector<char32_t> decode_utf8(const std::string& s) {
  std::vector<char32_t> cps;
  cps.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    char32_t cp = c;
    std::size_t extra = 0;
    if (c >= 0xF0) extra = 3, cp = c & 0x07;
    else if (c >= 0xE0) extra = 2, cp = c & 0x0F;
    else if (c >= 0xC0) extra = 1, cp = c & 0x1F;
    if (extra > 0 && i + extra < s.size() + 1) {
      bool ok = true;
      char32_t acc = cp;
      for (std::size_t k = 1; k <= extra && i + k < s.size(); ++k) {
        const unsigned char cc = static_cast<unsigned char>(s[i + k]);
        if ((cc & 0xC0) != 0x80) { ok = false; break; }
        acc = (acc << 6) | (cc & 0x3F);
      }
      if (ok && i + extra < s.size()) {
        cps.push_back(acc);
        i += extra + 1;
        continue;
      }
    }
    cps.push_back(cp);
    ++i;
  }
  return cps;
}

inline void encode_utf8(char32_t cp, std::string& out) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline char32_t lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;  // Latin-1
  return cp;
}

inline bool is_space_cp(char32_t cp) {
  if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
      cp == U'\v')
    return true;
  return cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200B) || cp == 0x3000;
}

/// Alphanumeric runs form tokens; everything else is punctuation. Non-ASCII
/// code points default to word characters unless they fall in common
/// punctuation/symbol blocks.
inline bool is_word_cp(char32_t cp) {
  if (cp < 0x80)
    return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') ||
           (cp >= U'A' && cp <= U'Z');
  if (cp >= 0xA1 && cp <= 0xBF) return false;  // Latin-1 punctuation/symbols
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2010 && cp <= 0x205E) return false;  // general punctuation
  if (cp >= 0x20A0 && cp <= 0x20BF) return false;  // currency signs
  if (cp >= 0x2100 && cp <= 0x27BF) return false;  // symbols, arrows, dingbats
  if (cp >= 0x3001 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE6F) return false;
  if (cp >= 0xFF01 && cp <= 0xFF0F) return false;
  if (cp >= 0xFF1A && cp <= 0xFF20) return false;
  if (cp >= 0xFF3B && cp <= 0xFF40) return false;
  if (cp >= 0xFF5B && cp <= 0xFF65) return false;
  return true;
}

inline std::string encode_lower(const std::vector<char32_t>& cps,
                                std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end; ++i) encode_utf8(lower_cp(cps[i]), out);
  return out;
}

}  // namespace detail

/// Lowercases and splits: contiguous alphanumeric runs become one token, each
/// punctuation character becomes its own token, whitespace is dropped.
/// Offsets index code points of the original string.
inline std::vector<Token> tokenize(const std::string& text) {
  const std::vector<char32_t> cps = detail::decode_utf8(text);
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < cps.size()) {
    if (detail::is_space_cp(cps[i])) {
      ++i;
      continue;
    }
    if (detail::is_word_cp(cps[i])) {
      std::size_t j = i + 1;
      while (j < cps.size() && detail::is_word_cp(cps[j])) ++j;
      tokens.push_back({detail::encode_lower(cps, i, j), i, j});
      i = j;
    } else {
      tokens.push_back({detail::encode_lower(cps, i, i + 1), i, i + 1});
      ++i;
    }
  }
  return tokens;
}

inline std::size_t codepoint_length(const std::string& s) {
  return detail::decode_utf8(s).size();
}

// ---- aspect span alignment ----------------------------------------------

namespace detail {

struct SpanMapping {
  std::size_t gamma = 0;
  std::size_t len = 0;
  bool exact = false;
};

/// Maps character offsets [from, to) onto the smallest covering token span.
inline std::optional<SpanMapping> map_char_span(const std::vector<Token>& tokens,
                                                std::size_t from, std::size_t to) {
  if (from >= to) return std::nullopt;
  std::optional<std::size_t> first, last;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].char_end > from && tokens[i].char_start < to) {
      if (!first) first = i;
      last = i;
    }
  }
  if (!first) return std::nullopt;
  SpanMapping m;
  m.gamma = *first;
  m.len = *last - *first + 1;
  m.exact = tokens[*first].char_start == from && tokens[*last].char_end == to;
  return m;
}

inline void warn(std::vector<std::string>* sink, std::string msg) {
  if (sink) sink->push_back(std::move(msg));
}

}  // namespace detail

// ---- SemEval 2014 XML ----------------------------------------------------

/// Parses aspect-term annotations from SemEval-2014 XML. One instance per
/// (sentence, aspectTerm) pair; "conflict" polarity terms are dropped;
/// character offsets that do not line up with token boundaries are snapped to
/// the covering token span with a warning.
inline Dataset parse_semeval_xml(const std::string& content, Domain domain,
                                 Split split,
                                 std::vector<std::string>* warnings = nullptr) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(content);
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw ParseError("XML parse error at line " + std::to_string(e.line()) +
                     ": " + e.message());
  }

  Dataset ds;
  ds.domain = domain;
  ds.split = split;
  const auto sentences = tree.get_child_optional("sentences");
  if (!sentences) throw ParseError("XML: missing <sentences> root element");

  for (const auto& [key, sentence] : *sentences) {
    if (key != "sentence") continue;
    const std::string sid = sentence.get<std::string>("<xmlattr>.id", "");
    const std::string text = sentence.get<std::string>("text", "");
    const auto terms = sentence.get_child_optional("aspectTerms");
    if (!terms) continue;

    std::vector<Token> tokens = tokenize(text);
    std::size_t aspect_idx = 0;
    for (const auto& [tkey, term] : *terms) {
      if (tkey != "aspectTerm") continue;
      const std::string surface = term.get<std::string>("<xmlattr>.term", "");
      const std::string polarity = term.get<std::string>("<xmlattr>.polarity", "");
      const std::string instance_id = sid + ":" + std::to_string(aspect_idx++);
      if (polarity == "conflict") continue;
      const auto label = polarity_from_string(polarity);
      if (!label) {
        detail::warn(warnings, instance_id + ": unknown polarity '" + polarity +
                                   "', entry skipped");
        continue;
      }
      std::size_t from = 0, to = 0;
      try {
        from = static_cast<std::size_t>(std::stoul(term.get<std::string>("<xmlattr>.from")));
        to = static_cast<std::size_t>(std::stoul(term.get<std::string>("<xmlattr>.to")));
      } catch (const std::exception&) {
        throw ParseError("XML: bad from/to offsets in sentence " + sid);
      }
      const auto span = detail::map_char_span(tokens, from, to);
      if (!span) {
        detail::warn(warnings, instance_id + ": aspect span [" +
                                   std::to_string(from) + "," + std::to_string(to) +
                                   ") covers no token, entry skipped");
        continue;
      }
      if (!span->exact) {
        detail::warn(warnings, instance_id + ": offsets [" + std::to_string(from) +
                                   "," + std::to_string(to) +
                                   ") snapped to covering tokens [" +
                                   std::to_string(span->gamma) + "," +
                                   std::to_string(span->gamma + span->len) + ")");
      }
      Instance ins;
      ins.tokens = tokens;
      ins.aspect_start = span->gamma;
      ins.aspect_len = span->len;
      ins.label = *label;
      ins.id = instance_id;
      ins.domain = domain;
      (void)surface;
      ds.instances.push_back(std::move(ins));
    }
  }
  return ds;
}

// ---- ARTS JSON -------------------------------------------------------------

/// Parses ARTS-style test data: a JSON object keyed by id or a JSON array,
/// each entry carrying sentence text, aspect term, character offsets and a
/// polarity.
inline Dataset parse_arts(const std::string& content, Domain domain,
                          std::vector<std::string>* warnings = nullptr) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("JSON parse error: ") + e.what());
  }
  if (!doc.is_object() && !doc.is_array())
    throw ParseError("ARTS JSON: expected object or array at top level");

  Dataset ds;
  ds.domain = domain;
  ds.split = Split::Test;

  auto parse_entry = [&](const std::string& id, const nlohmann::json& entry) {
    if (!entry.is_object())
      throw ParseError("ARTS JSON: entry " + id + " is not an object");
    const nlohmann::json* text = nullptr;
    if (entry.contains("sentence")) text = &entry.at("sentence");
    else if (entry.contains("text")) text = &entry.at("text");
    const nlohmann::json* term = nullptr;
    if (entry.contains("term")) term = &entry.at("term");
    else if (entry.contains("aspect")) term = &entry.at("aspect");
    if (!text || !term || !entry.contains("from") || !entry.contains("to") ||
        !entry.contains("polarity"))
      throw ParseError("ARTS JSON: entry " + id + " is missing required fields");

    const auto label = polarity_from_string(entry.at("polarity").get<std::string>());
    if (!label) {
      detail::warn(warnings, id + ": unknown polarity '" +
                                 entry.at("polarity").get<std::string>() +
                                 "', entry skipped");
      return;
    }
    auto as_offset = [&id](const nlohmann::json& v) -> std::size_t {
      if (v.is_number_unsigned() || v.is_number_integer())
        return v.get<std::size_t>();
      if (v.is_string()) {
        try {
          return static_cast<std::size_t>(std::stoul(v.get<std::string>()));
        } catch (const std::exception&) {
        }
      }
      throw ParseError("ARTS JSON: entry " + id + " has a bad offset");
    };
    const std::size_t from = as_offset(entry.at("from"));
    const std::size_t to = as_offset(entry.at("to"));

    std::vector<Token> tokens = tokenize(text->get<std::string>());
    const auto span = detail::map_char_span(tokens, from, to);
    if (!span) {
      detail::warn(warnings, id + ": aspect span covers no token, entry skipped");
      return;
    }
    if (!span->exact)
      detail::warn(warnings, id + ": offsets snapped to covering tokens");

    Instance ins;
    ins.tokens = std::move(tokens);
    ins.aspect_start = span->gamma;
    ins.aspect_len = span->len;
    ins.label = *label;
    ins.id = id;
    ins.domain = domain;
    ds.instances.push_back(std::move(ins));
  };

  if (doc.is_object()) {
    for (const auto& [key, entry] : doc.items()) parse_entry(key, entry);
  } else {
    std::size_t i = 0;
    for (const auto& entry : doc) {
      std::string id = entry.is_object() && entry.contains("id") &&
                               entry.at("id").is_string()
                           ? entry.at("id").get<std::string>()
                           : std::to_string(i);
      parse_entry(id, entry);
      ++i;
    }
  }
  return ds;
}

// ---- dev split -------------------------------------------------------------

/// Draws k instances uniformly at random (without replacement) into a dev
/// set; the remainder keeps its original order. Deterministic per seed.
inline std::pair<Dataset, Dataset> split_dev(const Dataset& train, std::size_t k,
                                             std::uint64_t seed) {
  if (k > train.size())
    throw std::invalid_argument("split_dev: k exceeds dataset size");
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<bool> in_dev(train.size(), false);
  for (std::size_t i = 0; i < k; ++i) in_dev[idx[i]] = true;

  Dataset rest, dev;
  rest.domain = dev.domain = train.domain;
  rest.split = Split::Train;
  dev.split = Split::Dev;
  for (std::size_t i = 0; i < train.size(); ++i)
    (in_dev[i] ? dev : rest).instances.push_back(train.instances[i]);
  return {std::move(rest), std::move(dev)};
}

// ---- embeddings --------------------------------------------------------------

/// Vocabulary-filtered word-vector table. Lookup is total: unknown surfaces
/// map to the shared OOV vector.
struct EmbeddingTable {
  std::size_t dimension = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
  std::vector<double> oov_vector;
  std::size_t found = 0;
  std::size_t missing = 0;

  const std::vector<double>& lookup(const std::string& surface) const {
    auto it = vectors.find(surface);
    return it != vectors.end() ? it->second : oov_vector;
  }

  bool contains(const std::string& surface) const {
    return vectors.count(surface) != 0;
  }
};

/// Reads a GloVe-style text file (token then `dimension` decimals per line),
/// keeping only vocabulary words. Lines with the wrong field count are
/// skipped with a warning; zero matches is an error. The OOV vector is drawn
/// once, uniformly from [-0.1, 0.1], under `oov_seed`.
inline EmbeddingTable load_embeddings(std::istream& in,
                                      const std::set<std::string>& vocabulary,
                                      std::size_t dimension,
                                      std::uint64_t oov_seed = 0,
                                      std::vector<std::string>* warnings = nullptr) {
  if (dimension == 0)
    throw std::invalid_argument("load_embeddings: dimension must be positive");
  EmbeddingTable table;
  table.dimension = dimension;

  std::string line;
  std::size_t lineno = 0;
  std::size_t bad_lines = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0) {
      ++bad_lines;
      continue;
    }
    std::string word = line.substr(0, sp);
    if (!vocabulary.count(word)) continue;
    if (table.vectors.count(word)) continue;  // first occurrence wins

    std::vector<double> vec;
    vec.reserve(dimension);
    const char* p = line.c_str() + sp;
    char* end = nullptr;
    bool ok = true;
    while (*p) {
      const double v = std::strtod(p, &end);
      if (end == p) break;
      vec.push_back(v);
      p = end;
    }
    if (vec.size() != dimension) {
      ++bad_lines;
      detail::warn(warnings, "line " + std::to_string(lineno) + ": expected " +
                                 std::to_string(dimension) + " values, got " +
                                 std::to_string(vec.size()) + "; skipped");
      ok = false;
    }
    if (ok) table.vectors.emplace(std::move(word), std::move(vec));
  }

  if (table.vectors.empty())
    throw ParseError("load_embeddings: no vocabulary word matched any line (" +
                     std::to_string(bad_lines) + " malformed lines)");

  table.found = table.vectors.size();
  table.missing = vocabulary.size() - table.found;
  Rng rng(oov_seed);
  table.oov_vector.resize(dimension);
  for (double& v : table.oov_vector) v = rng.uniform(-0.1, 0.1);
  return table;
}

inline EmbeddingTable load_embeddings_file(const std::string& path,
                                           const std::set<std::string>& vocabulary,
                                           std::size_t dimension,
                                           std::uint64_t oov_seed = 0,
                                           std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file: " + path);
  return load_embeddings(in, vocabulary, dimension, oov_seed, warnings);
}

/// Distinct token surfaces across datasets, insertion-ordered by first use.
inline std::set<std::string> vocabulary_of(
    const std::vector<const Dataset*>& datasets) {
  std::set<std::string> vocab;
  for (const Dataset* ds : datasets)
    for (const Instance& ins : ds->instances)
      for (const Token& t : ins.tokens) vocab.insert(t.surface);
  return vocab;
}

// ---- internal dataset dump (line-delimited JSON) ----------------------------

inline void dump_jsonl(const Dataset& ds, std::ostream& out) {
  for (const Instance& ins : ds.instances) {
    nlohmann::json j;
    j["id"] = ins.id;
    j["domain"] = to_string(ins.domain);
    nlohmann::json toks = nlohmann::json::array();
    for (const Token& t : ins.tokens) toks.push_back(t.surface);
    j["tokens"] = std::move(toks);
    j["aspect_start"] = ins.aspect_start;
    j["aspect_len"] = ins.aspect_len;
    j["label"] = to_string(ins.label);
    out << j.dump() << '\n';
  }
}

/// Loads a dump produced by dump_jsonl. Token offsets are synthesized from a
/// single-space joining of the surfaces.
inline Dataset load_jsonl(std::istream& in, Split split) {
  Dataset ds;
  ds.split = split;
  std::string line;
  std::size_t lineno = 0;
  bool domain_set = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    Instance ins;
    try {
      ins.id = j.at("id").get<std::string>();
      const auto dom = domain_from_string(j.at("domain").get<std::string>());
      if (!dom) throw ParseError("jsonl line " + std::to_string(lineno) +
                                 ": unknown domain");
      ins.domain = *dom;
      std::size_t pos = 0;
      for (const auto& t : j.at("tokens")) {
        const std::string surface = t.get<std::string>();
        const std::size_t len = codepoint_length(surface);
        ins.tokens.push_back({surface, pos, pos + len});
        pos += len + 1;
      }
      ins.aspect_start = j.at("aspect_start").get<std::size_t>();
      ins.aspect_len = j.at("aspect_len").get<std::size_t>();
      const auto label = polarity_from_string(j.at("label").get<std::string>());
      if (!label) throw ParseError("jsonl line " + std::to_string(lineno) +
                                   ": unknown label");
      ins.label = *label;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    if (ins.tokens.empty() || ins.aspect_start + ins.aspect_len > ins.tokens.size())
      throw ParseError("jsonl line " + std::to_string(lineno) +
                       ": aspect span out of range");
    if (!domain_set) {
      ds.domain = ins.domain;
      domain_set = true;
    } else if (ds.domain != ins.domain) {
      throw ParseError("jsonl line " + std::to_string(lineno) +
                       ": mixed domains in one dataset");
    }
    ds.instances.push_back(std::move(ins));
  }
  return ds;
}

inline Dataset load_jsonl_file(const std::string& path, Split split) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file: " + path);
  return load_jsonl(in, split);
}

}  // namespace posbias::corpus
