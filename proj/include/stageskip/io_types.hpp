#pragma once

#include <string>
#include <vector>

#include "stageskip/pipeline.hpp"

namespace stageskip {

// One multiple-choice question. Labels are single letters A..E in file order;
// gold names one of them.
struct DatasetRecord {
  std::string id;
  std::string question;
  std::vector<QuestionOption> options;
  std::string gold;

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(options.size());
    for (const auto& o : options) out.push_back(o.label);
    return out;
  }
};

}  // namespace stageskip
