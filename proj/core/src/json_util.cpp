#include "json_util.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "mafd/errors.hpp"

namespace mafd::detail {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Json parse_json(const std::string& text, std::string_view what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

void require_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                  std::string_view what) {
  if (!object.is_object()) throw ParseError(std::string(what) + ": expected a JSON object");
  for (const auto& item : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ParseError(std::string(what) + ": unknown key '" + item.key() + "'");
    }
  }
}

double get_number(const Json& object, std::string_view key, std::string_view what) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw ParseError(std::string(what) + ": missing key '" + std::string(key) + "'");
  }
  if (!it->is_number()) {
    throw ParseError(std::string(what) + ": key '" + std::string(key) + "' must be a number");
  }
  return it->get<double>();
}

double get_number_or(const Json& object, std::string_view key, double fallback,
                     std::string_view what) {
  if (!object.contains(key)) return fallback;
  return get_number(object, key, what);
}

int get_int(const Json& object, std::string_view key, std::string_view what) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw ParseError(std::string(what) + ": missing key '" + std::string(key) + "'");
  }
  if (!it->is_number_integer()) {
    throw ParseError(std::string(what) + ": key '" + std::string(key) + "' must be an integer");
  }
  return it->get<int>();
}

const Json& get_array(const Json& object, std::string_view key, std::string_view what) {
  auto it = object.find(key);
  if (it == object.end()) {
    throw ParseError(std::string(what) + ": missing key '" + std::string(key) + "'");
  }
  if (!it->is_array()) {
    throw ParseError(std::string(what) + ": key '" + std::string(key) + "' must be an array");
  }
  return *it;
}

std::vector<double> to_doubles(const Json& array, std::string_view what) {
  if (!array.is_array()) throw ParseError(std::string(what) + ": expected an array");
  std::vector<double> out;
  out.reserve(array.size());
  for (const auto& v : array) {
    if (!v.is_number()) throw ParseError(std::string(what) + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const Json& j, std::string_view what) {
  require_keys(j, {"rows", "cols", "data"}, what);
  const int rows = get_int(j, "rows", what);
  const int cols = get_int(j, "cols", what);
  if (rows < 0 || cols < 0) throw ParseError(std::string(what) + ": negative dimension");
  const auto data = to_doubles(get_array(j, "data", what), what);
  if (data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw ParseError(std::string(what) + ": data length does not match rows*cols");
  }
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i) * cols + k];
  }
  return m;
}

}  // namespace mafd::detail
