#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace mafd::detail {

using Json = nlohmann::json;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

Json parse_json(const std::string& text, std::string_view what);

// Throws ParseError if `object` is not an object or holds a key outside `allowed`.
void require_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                  std::string_view what);

double get_number(const Json& object, std::string_view key, std::string_view what);
double get_number_or(const Json& object, std::string_view key, double fallback,
                     std::string_view what);
int get_int(const Json& object, std::string_view key, std::string_view what);
const Json& get_array(const Json& object, std::string_view key, std::string_view what);

std::vector<double> to_doubles(const Json& array, std::string_view what);

Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j, std::string_view what);

}  // namespace mafd::detail
