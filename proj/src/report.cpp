#include "nsmml/report.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace nsmml {

namespace {

std::string scalar(const Report& value) {
  if (value.is_null()) return "NA";
  if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
  if (value.is_number_float()) return fmt::format("{}", value.get<double>());
  if (value.is_number_unsigned()) return fmt::format("{}", value.get<std::uint64_t>());
  if (value.is_number_integer()) return fmt::format("{}", value.get<std::int64_t>());
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

bool is_flat_array(const Report& value) {
  return value.is_array() && std::none_of(value.begin(), value.end(), [](const Report& v) { return v.is_structured(); });
}

void render(std::string& out, const Report& value, int depth);

void render_member(std::string& out, const std::string& key, const Report& value, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * depth), ' ');
  if (value.is_object() || (value.is_array() && !is_flat_array(value))) {
    out += pad + key + ":\n";
    render(out, value, depth + 1);
  } else if (value.is_array()) {
    std::string items;
    for (std::size_t i = 0; i < value.size(); ++i) items += (i ? ", " : "") + scalar(value[i]);
    out += pad + key + " = [" + items + "]\n";
  } else {
    out += pad + key + " = " + scalar(value) + "\n";
  }
}

void render(std::string& out, const Report& value, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * depth), ' ');
  if (value.is_object()) {
    for (const auto& [key, member] : value.items()) render_member(out, key, member, depth);
  } else if (value.is_array()) {
    for (const auto& item : value) {
      if (item.is_object()) {
        out += pad + "-\n";
        render(out, item, depth + 1);
      } else if (item.is_array()) {
        out += pad + "-\n";
        render(out, item, depth + 1);
      } else {
        out += pad + "- " + scalar(item) + "\n";
      }
    }
  } else {
    out += pad + scalar(value) + "\n";
  }
}

}  // namespace

std::string render_text_report(std::string_view kind, const Report& body) {
  std::string out = "nsmml-report 1\n";
  out += "kind = " + std::string(kind) + "\n";
  render(out, body, 0);
  return out;
}

std::string render_json_report(std::string_view kind, const Report& body) {
  Report doc;
  doc["format"] = "nsmml-report";
  doc["version"] = 1;
  doc["kind"] = std::string(kind);
  for (const auto& [key, member] : body.items()) doc[key] = member;
  return doc.dump(2) + "\n";
}

}  // namespace nsmml
