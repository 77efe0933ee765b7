#pragma once

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace losh {

enum class PosTag { DET, ADJ, NOUN, VERB, PREP, PRON, CONJ, NUM, OTHER };

inline const char* to_string(PosTag t) {
  switch (t) {
    case PosTag::DET: return "DET";
    case PosTag::ADJ: return "ADJ";
    case PosTag::NOUN: return "NOUN";
    case PosTag::VERB: return "VERB";
    case PosTag::PREP: return "PREP";
    case PosTag::PRON: return "PRON";
    case PosTag::CONJ: return "CONJ";
    case PosTag::NUM: return "NUM";
    case PosTag::OTHER: return "OTHER";
  }
  return "OTHER";
}

inline PosTag tag_from_string(const std::string& s) {
  if (s == "DET") return PosTag::DET;
  if (s == "ADJ") return PosTag::ADJ;
  if (s == "NOUN") return PosTag::NOUN;
  if (s == "VERB") return PosTag::VERB;
  if (s == "PREP") return PosTag::PREP;
  if (s == "PRON") return PosTag::PRON;
  if (s == "CONJ") return PosTag::CONJ;
  if (s == "NUM") return PosTag::NUM;
  if (s == "OTHER") return PosTag::OTHER;
  throw std::invalid_argument("unknown part-of-speech tag: " + s);
}

struct TextExpression {
  std::vector<std::string> tokens;
  std::vector<PosTag> tags;

  std::string joined() const {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i) s += ' ';
      s += tokens[i];
    }
    return s;
  }
};

enum class PairSource { MANUAL, MACHINE };

struct LongShortPair {
  TextExpression long_expr;
  TextExpression short_expr;
  PairSource source = PairSource::MACHINE;
  // True when no verb was found (or truncation would drop the subject) and
  // the short form therefore equals the long one.
  bool fallback = false;
};

// Word -> tag table with the closed classes plus the open-class vocabulary
// used by the shape corpus and the usual pedestrian-scene words.
class Lexicon {
 public:
  static Lexicon builtin() {
    Lexicon lex;
    auto add = [&lex](std::initializer_list<const char*> words, PosTag tag) {
      for (const char* w : words) lex.entries_[w] = tag;
    };
    add({"a", "an", "the", "this", "that", "these", "those", "every", "each",
         "some", "any", "no"},
        PosTag::DET);
    add({"in", "on", "at", "by", "with", "of", "to", "from", "under", "over",
         "near", "behind", "beside", "above", "below", "across", "through",
         "into", "onto", "between", "next", "along", "around", "toward",
         "towards"},
        PosTag::PREP);
    add({"he", "she", "it", "they", "him", "her", "them", "his", "hers",
         "its", "their", "who", "which", "something", "someone"},
        PosTag::PRON);
    add({"and", "or", "but", "nor", "while", "whereas"}, PosTag::CONJ);
    // Copulas and auxiliaries count as verbs.
    add({"is", "are", "was", "were", "am", "be", "been", "being", "has",
         "have", "had", "does", "do", "did"},
        PosTag::VERB);
    add({"one", "two", "three", "four", "five", "six", "seven", "eight",
         "nine", "ten"},
        PosTag::NUM);
    // Corpus palette, shapes and motions.
    add({"red", "green", "blue", "yellow", "purple", "orange", "white",
         "black", "gray", "grey", "brown", "pink", "small", "large", "big",
         "little", "still"},
        PosTag::ADJ);
    add({"square", "circle", "triangle", "shape", "canvas"}, PosTag::NOUN);
    add({"moving", "walking", "running", "eating", "jumping", "riding",
         "standing", "sitting", "playing", "holding", "rolling", "climbing",
         "crawling", "flying", "swimming", "drifting", "sliding"},
        PosTag::VERB);
    add({"left", "right", "up", "down", "upward", "downward"}, PosTag::OTHER);
    // Frequent scene words from pedestrian/animal footage descriptions.
    add({"man", "woman", "person", "baby", "boy", "girl", "dog", "cat",
         "bird", "car", "ball", "bike", "bicycle", "horse", "t-shirt",
         "shirt", "suit", "dress", "hat", "meat", "food", "street", "road",
         "grass", "field", "water", "table", "chair", "floor", "wall",
         "adult", "child", "group"},
        PosTag::NOUN);
    return lex;
  }

  static Lexicon load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon: " + path.string());
    Lexicon lex;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      std::size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw std::runtime_error("lexicon line " + std::to_string(lineno) +
                                 ": expected word<TAB>TAG");
      std::string word = line.substr(0, tab);
      std::string tag = line.substr(tab + 1);
      while (!tag.empty() && (tag.back() == ' ' || tag.back() == '\t'))
        tag.pop_back();
      lex.entries_[word] = tag_from_string(tag);
    }
    return lex;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open lexicon: " + path.string());
    out << "# word<TAB>TAG\n";
    for (const auto& [word, tag] : entries_)
      out << word << '\t' << to_string(tag) << '\n';
  }

  const PosTag* find(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  bool is_auxiliary(const std::string& word) const {
    static const std::vector<std::string> aux = {"is", "are", "was", "were",
                                                 "am", "be", "been", "being"};
    return std::find(aux.begin(), aux.end(), word) != aux.end();
  }

  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, PosTag> entries_;
};

// Lower-cases, splits on whitespace, strips terminal punctuation, keeps
// hyphenated words intact.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream iss(text);
  std::string w;
  while (iss >> w) {
    while (!w.empty() && (w.back() == '.' || w.back() == ',' ||
                          w.back() == '!' || w.back() == '?' ||
                          w.back() == ';' || w.back() == ':'))
      w.pop_back();
    if (w.empty()) continue;
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    tokens.push_back(w);
  }
  return tokens;
}

// Tags every token: lexicon lookup first, then suffix heuristics for
// unknown words (-ing/-ed/-s after an auxiliary -> VERB, -ly -> OTHER,
// default NOUN). Total: every token gets a tag.
inline TextExpression pos_tag(const std::vector<std::string>& tokens,
                              const Lexicon& lex = Lexicon::builtin()) {
  if (tokens.empty())
    throw std::invalid_argument("pos_tag: empty token list");
  TextExpression expr;
  expr.tokens = tokens;
  expr.tags.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& w = tokens[i];
    if (const PosTag* t = lex.find(w)) {
      expr.tags.push_back(*t);
      continue;
    }
    bool after_aux = i > 0 && lex.is_auxiliary(tokens[i - 1]);
    auto ends_with = [&w](const char* suf) {
      std::size_t n = std::strlen(suf);
      return w.size() > n && w.compare(w.size() - n, n, suf) == 0;
    };
    if (after_aux && (ends_with("ing") || ends_with("ed") || ends_with("s")))
      expr.tags.push_back(PosTag::VERB);
    else if (ends_with("ly"))
      expr.tags.push_back(PosTag::OTHER);
    else
      expr.tags.push_back(PosTag::NOUN);
  }
  return expr;
}

inline TextExpression pos_tag(const std::string& text,
                              const Lexicon& lex = Lexicon::builtin()) {
  return pos_tag(tokenize(text), lex);
}

// Subject-centric short form: everything before the first verb. Falls back
// to the full expression when there is no verb or when truncating would
// drop the subject itself (first-verb index <= 1).
inline LongShortPair shorten(const TextExpression& long_expr) {
  if (long_expr.tokens.empty() ||
      long_expr.tokens.size() != long_expr.tags.size())
    throw std::invalid_argument("shorten: malformed expression");
  LongShortPair pair;
  pair.long_expr = long_expr;
  std::size_t verb = long_expr.tags.size();
  for (std::size_t i = 0; i < long_expr.tags.size(); ++i) {
    if (long_expr.tags[i] == PosTag::VERB) {
      verb = i;
      break;
    }
  }
  if (verb >= long_expr.tags.size() || verb <= 1) {
    pair.short_expr = long_expr;
    pair.fallback = true;
    return pair;
  }
  pair.short_expr.tokens.assign(long_expr.tokens.begin(),
                                long_expr.tokens.begin() + verb);
  pair.short_expr.tags.assign(long_expr.tags.begin(),
                              long_expr.tags.begin() + verb);
  return pair;
}

inline LongShortPair shorten(const std::string& text,
                             const Lexicon& lex = Lexicon::builtin()) {
  return shorten(pos_tag(text, lex));
}

}  // namespace losh
