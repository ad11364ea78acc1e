#pragma once

// Field accessors for the structured-text documents. Type mismatches surface
// as ValidationError naming the dotted field path.

#include <string>

#include <json.hpp>

#include "sdrbed/error.hpp"

namespace sdrbed::detail {

using nlohmann::json;

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& path) {
  if (!obj.is_object()) {
    throw Error(ErrorKind::Validation, path + " must be an object", path);
  }
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Validation, path + "." + key + " has the wrong type", path + "." + key);
  }
}

template <typename T>
T get_required(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
    throw Error(ErrorKind::Validation, path + "." + key + " is required", path + "." + key);
  }
  return get_or<T>(obj, key, T{}, path);
}

inline const json& get_array(const json& obj, const char* key, const std::string& path) {
  static const json kEmpty = json::array();
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return kEmpty;
  if (!it->is_array()) {
    throw Error(ErrorKind::Validation, path + "." + key + " must be an array", path + "." + key);
  }
  return *it;
}

inline json parse_document(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, std::string("malformed document: ") + e.what());
  }
}

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace sdrbed::detail
