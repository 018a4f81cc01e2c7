#pragma once

/** @file
 * Structured text rendering of reports.
 *
 * A report is an ordered JSON object. The text form starts with the line
 * `nsmml-report 1`, then `kind = <kind>`, then one `key = value` line per
 * scalar. Objects open with `key:` and indent their members by two spaces;
 * arrays of scalars print inline as `[a, b, c]`, other arrays as `- ` items.
 * Reals use the shortest representation that reads back exactly.
 */

#include <json.hpp>
#include <string>
#include <string_view>

namespace nsmml {

using Report = nlohmann::ordered_json;

std::string render_text_report(std::string_view kind, const Report& body);
/// {"format": "nsmml-report", "version": 1, "kind": kind, ...body}.
std::string render_json_report(std::string_view kind, const Report& body);

}  // namespace nsmml
