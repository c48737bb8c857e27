// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/synthetic.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"

#include "phraseforge/errors.hpp"
#include "phraseforge/hash.hpp"

namespace phraseforge::synthetic {

namespace {

struct Topic {
  const char* noun;
  const char* alias;  // how questions name the topic noun
  const char* region;
  const char* feature;
};

// Twenty disjoint topic vocabularies. Questions use the alias, never the noun.
constexpr std::array<Topic, 20> kTopics = {{
    {"harbor", "port", "coast", "ships"},
    {"mine", "pit", "hills", "tunnels"},
    {"abbey", "monastery", "valley", "bells"},
    {"orchard", "grove", "plain", "cider"},
    {"fortress", "citadel", "border", "towers"},
    {"observatory", "stargazers", "summit", "comets"},
    {"vineyard", "winery", "slopes", "cellars"},
    {"foundry", "smelter", "delta", "furnaces"},
    {"library", "archive", "quarter", "scrolls"},
    {"mill", "grindhouse", "river", "flour"},
    {"theater", "playhouse", "square", "masks"},
    {"railway", "line", "junction", "engines"},
    {"garden", "park", "terrace", "fountains"},
    {"brewery", "alehouse", "lowlands", "kegs"},
    {"shipyard", "dockworks", "estuary", "hulls"},
    {"academy", "college", "uplands", "scholars"},
    {"market", "bazaar", "crossroads", "spices"},
    {"lighthouse", "beacon", "cape", "lanterns"},
    {"quarry", "stoneworks", "ridge", "marble"},
    {"pottery", "kilnworks", "marsh", "urns"},
}};

// Entities are "<modifier> <topic noun>", so ten modifiers name ten passages
// per topic. Questions use the modifier's alias as well.
struct Modifier {
  const char* word;
  const char* alias;
};
constexpr std::array<Modifier, 10> kModifiers = {{
    {"amber", "honeyed"}, {"ashen", "grey"},   {"golden", "gilded"}, {"hidden", "secret"},
    {"iron", "steel"},    {"misty", "foggy"},  {"old", "ancient"},   {"quiet", "silent"},
    {"silver", "argent"}, {"windy", "breezy"},
}};

struct Attribute {
  const char* passage_template;  // {E} entity, {V} value
  const char* question_named;    // {E}
  const char* question_pronoun;
};

// Each answer is framed by attribute-specific wording on both sides. Questions
// paraphrase that wording, so lexical overlap is partial.
constexpr std::array<Attribute, 6> kAttributes = {{
    {"the {E} was founded by {V} long ago .", "who founded the {E}", "who founded it"},
    {"the {E} is governed by {V} as regent .", "who leads the {E}", "who leads it"},
    {"the {E} feuds with {V} over old debts .", "who is the rival of the {E}", "who is its rival"},
    {"the {E} is famous for {V} wares sold abroad .", "what is the {E} known for", "what is it known for"},
    {"the emblem of the {E} shows {V} on a banner .", "what symbol does the {E} use", "what symbol does it use"},
    {"the {E} was built near {V} by the water .", "where was the {E} built", "where was it built"},
}};

// Answers are two pseudo-words drawn from pools shared by every attribute, so
// only the surrounding wording tells the attributes apart.
constexpr std::array<const char*, 15> kValueHead = {
    "vel", "kor", "amri", "dusk", "fenn", "gorm", "hask", "ilo", "jarn", "kesh",
    "lorv", "mab", "nim", "orsk", "pell"};
constexpr std::array<const char*, 15> kValueTail = {
    "tarrow", "brisk", "calder", "doran", "evany", "fosk", "grell", "hallow", "istan",
    "jory", "kelm", "lund", "marrow", "norl", "opal"};

template <std::size_t N>
const char* pick(const std::array<const char*, N>& pool, std::mt19937_64& rng) {
  return pool[uniform_index(rng, N)];
}

std::string substitute(std::string text, std::string_view key, std::string_view value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string two_digits(int v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

}  // namespace

Benchmark generate(const Options& options) {
  if (options.topics < 1 || options.topics > static_cast<int>(kTopics.size())) {
    throw ConfigError("synthetic topics must be in [1, 20]");
  }
  if (options.passages_per_topic < 1 ||
      options.passages_per_topic > static_cast<int>(kModifiers.size())) {
    throw ConfigError("passages_per_topic must be in [1, 10]");
  }
  if (options.facts_per_passage < 1 || options.facts_per_passage > static_cast<int>(kAttributes.size())) {
    throw ConfigError("facts_per_passage must be in [1, 6]");
  }
  if (options.turns_per_conversation < 1 ||
      2 * options.turns_per_conversation > options.facts_per_passage) {
    throw ConfigError("turns_per_conversation must be in [1, facts_per_passage / 2]");
  }
  std::mt19937_64 rng(options.seed);
  Benchmark out;
  // (attribute, value) pairs already planted, so no answer repeats for an attribute.
  std::set<std::pair<int, std::string>> used_values;

  int serial = 0;
  for (int t = 0; t < options.topics; ++t) {
    const Topic& topic = kTopics[static_cast<std::size_t>(t)];
    std::vector<std::size_t> modifiers(kModifiers.size());
    for (std::size_t m = 0; m < modifiers.size(); ++m) modifiers[m] = m;
    seeded_shuffle(modifiers, rng);
    for (int j = 0; j < options.passages_per_topic; ++j, ++serial) {
      const Modifier& modifier = kModifiers[modifiers[static_cast<std::size_t>(j)]];
      const std::string name = std::string(modifier.word) + " " + topic.noun;
      const std::string alias = std::string(modifier.alias) + " " + topic.alias;

      std::vector<int> attrs(kAttributes.size());
      for (std::size_t a = 0; a < attrs.size(); ++a) attrs[a] = static_cast<int>(a);
      seeded_shuffle(attrs, rng);
      attrs.resize(static_cast<std::size_t>(options.facts_per_passage));

      std::vector<std::pair<int, std::string>> facts;
      for (int a : attrs) {
        std::string value;
        do {
          value = std::string(pick(kValueHead, rng)) + " " + pick(kValueTail, rng);
        } while (!used_values.emplace(a, value).second);
        facts.emplace_back(a, value);
      }

      std::string text = "the " + name + " lies in the " + topic.region + " .";
      for (const auto& [a, value] : facts) {
        text += " " + substitute(substitute(kAttributes[static_cast<std::size_t>(a)].passage_template,
                                            "{E}", name),
                                 "{V}", value);
      }
      text += std::string(" locals praise its ") + topic.feature + " .";

      const std::string pid = "syn-t" + two_digits(t) + "-p" + two_digits(j);
      out.passages.push_back(make_passage(pid, name, text));

      // One passage in four gets a benchmark conversation; every passage gets a
      // transfer conversation over the remaining facts.
      std::vector<std::size_t> order(facts.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      seeded_shuffle(order, rng);
      const auto turns = static_cast<std::size_t>(options.turns_per_conversation);
      auto emit = [&](std::vector<ConversationTurn>& split, const std::string& cid,
                      std::size_t first) {
        for (std::size_t turn = 0; turn < turns && first + turn < order.size(); ++turn) {
          const auto& [a, value] = facts[order[first + turn]];
          const Attribute& attr = kAttributes[static_cast<std::size_t>(a)];
          ConversationTurn ct;
          ct.conversation_id = cid;
          ct.turn_index = static_cast<int>(turn) + 1;
          ct.question = turn == 0 ? substitute(attr.question_named, "{E}", alias) : attr.question_pronoun;
          ct.gold_answer = value;
          ct.gold_passage_id = pid;
          split.push_back(std::move(ct));
        }
      };
      if (serial % 4 == 0) emit(out.conversations, pid + "-c", 0);
      emit(out.transfer, pid + "-x", turns);
    }
  }
  return out;
}

std::optional<int> topic_of(std::string_view id) {
  constexpr std::string_view prefix = "syn-t";
  if (!id.starts_with(prefix) || id.size() < prefix.size() + 2) return std::nullopt;
  int topic = 0;
  const char* first = id.data() + prefix.size();
  const auto [ptr, ec] = std::from_chars(first, first + 2, topic);
  if (ec != std::errc{} || ptr != first + 2) return std::nullopt;
  return topic;
}

std::vector<Conversation> filter_topics(const std::vector<Conversation>& conversations, int first,
                                        int last) {
  std::vector<Conversation> out;
  for (const auto& c : conversations) {
    const auto t = topic_of(c.conversation_id);
    if (t && *t >= first && *t <= last) out.push_back(c);
  }
  return out;
}

namespace {

void write_turns(const std::vector<ConversationTurn>& turns, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : turns) {
    nlohmann::json record = {{"conversation_id", t.conversation_id},
                             {"turn_index", t.turn_index},
                             {"question", t.question},
                             {"gold_answer", t.gold_answer}};
    if (t.gold_passage_id) record["gold_passage_id"] = *t.gold_passage_id;
    out << record.dump() << '\n';
  }
}

}  // namespace

void write_benchmark(const Benchmark& benchmark, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "corpus.jsonl", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "corpus.jsonl").string());
    for (const auto& p : benchmark.passages) {
      nlohmann::json record = {{"passage_id", p.passage_id}, {"title", p.title}, {"text", p.text}};
      out << record.dump() << '\n';
    }
  }
  write_turns(benchmark.conversations, dir / "conversations.jsonl");
  write_turns(benchmark.transfer, dir / "transfer.jsonl");
}

}  // namespace phraseforge::synthetic
