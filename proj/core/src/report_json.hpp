#pragma once

#include <string>
#include <vector>

#include "angdist/metrics.hpp"
#include "json_util.hpp"

namespace angdist::detail {

json report_json(const GeometryReport& report, const std::vector<std::string>& class_names);
json scores_json(const GeometryReport& report);

}  // namespace angdist::detail
