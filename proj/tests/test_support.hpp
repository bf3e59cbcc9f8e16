#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

namespace mfpf::test {

inline std::string data_path(const std::string& file) { return std::string(MFPF_TEST_DATA_DIR) + "/" + file; }
inline std::string case_path(const std::string& file) { return std::string(MFPF_CASE_DIR) + "/" + file; }

inline nlohmann::json load_reference(const std::string& case_name) {
  std::ifstream in(data_path(case_name + "_reference.json"));
  return nlohmann::json::parse(in);
}

}  // namespace mfpf::test
