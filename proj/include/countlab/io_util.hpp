#pragma once

#include <json.hpp>
#include <string>

namespace countlab {

using json = nlohmann::json;

void ensure_dir(const std::string& dir);
json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j, int indent = 2);
std::string join_words(const std::vector<std::string>& words);
std::vector<std::string> split_words(const std::string& text);

}  // namespace countlab
