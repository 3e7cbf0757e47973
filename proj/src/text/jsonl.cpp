#include "steerlm/text/jsonl.hpp"

#include <fstream>
#include <json.hpp>

namespace steerlm {
namespace {

using nlohmann::json;

template <typename Record, typename Parse>
LoadResult<Record> load_lines(const std::string& path, Parse&& parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  LoadResult<Record> result;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      result.records.push_back(parse(json::parse(line)));
    } catch (const std::exception& e) {
      result.errors.push_back({lineno, e.what()});
    }
  }
  if (result.records.empty()) {
    throw EmptyDatasetError(path + ": no valid records (" + std::to_string(result.errors.size()) + " malformed)",
                            result.errors);
  }
  return result;
}

std::int64_t optional_id(const json& j) { return j.contains("id") ? j.at("id").get<std::int64_t>() : -1; }

}  // namespace

LoadResult<Dialogue> load_dialogues(const std::string& path) {
  return load_lines<Dialogue>(path, [](const json& j) {
    Dialogue d;
    d.id = optional_id(j);
    d.turns = j.at("turns").get<std::vector<std::string>>();
    if (d.turns.empty()) throw std::invalid_argument("dialogue has no turns");
    for (const auto& t : d.turns) {
      if (Vocab::split(t).empty()) throw std::invalid_argument("dialogue has an empty turn");
    }
    return d;
  });
}

LoadResult<LabeledExample> load_labeled(const std::string& path, int num_classes) {
  return load_lines<LabeledExample>(path, [num_classes](const json& j) {
    LabeledExample e;
    e.id = optional_id(j);
    e.text = j.at("text").get<std::string>();
    e.label = j.at("label").get<int>();
    if (e.label < 0 || e.label >= num_classes) {
      throw std::invalid_argument("label " + std::to_string(e.label) + " outside [0," + std::to_string(num_classes) +
                                  ")");
    }
    if (Vocab::split(e.text).empty()) throw std::invalid_argument("empty text");
    return e;
  });
}

void save_dialogues(const std::string& path, const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& d : dialogues) out << json{{"id", d.id}, {"turns", d.turns}}.dump() << '\n';
}

void save_labeled(const std::string& path, const std::vector<LabeledExample>& examples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& e : examples) out << json{{"id", e.id}, {"text", e.text}, {"label", e.label}}.dump() << '\n';
}

}  // namespace steerlm
