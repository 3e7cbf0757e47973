#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "steerlm/text/dialogue.hpp"

namespace steerlm {

struct LineError {
  int line = 0;  // 1-based
  std::string message;
};

template <typename Record>
struct LoadResult {
  std::vector<Record> records;
  std::vector<LineError> errors;
};

/// Thrown when a JSONL file yields no valid records at all.
class EmptyDatasetError : public std::runtime_error {
 public:
  EmptyDatasetError(const std::string& what, std::vector<LineError> errors)
      : std::runtime_error(what), errors_(std::move(errors)) {}
  const std::vector<LineError>& errors() const { return errors_; }

 private:
  std::vector<LineError> errors_;
};

/// {"turns": ["...", "..."]}, optional "id".
LoadResult<Dialogue> load_dialogues(const std::string& path);
/// {"text": "...", "label": int}, optional "id". Labels must be < num_classes.
LoadResult<LabeledExample> load_labeled(const std::string& path, int num_classes);

void save_dialogues(const std::string& path, const std::vector<Dialogue>& dialogues);
void save_labeled(const std::string& path, const std::vector<LabeledExample>& examples);

}  // namespace steerlm
