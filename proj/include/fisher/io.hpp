#pragma once

#include "fisher/market.hpp"

#include <string>

namespace fisher {

std::string instance_to_json(const MarketInstance& inst);
MarketInstance instance_from_json(const std::string& text);

void write_instance(const std::string& path, const MarketInstance& inst);
MarketInstance read_instance(const std::string& path);

/// Writes to a sibling temporary file, then renames over the target.
void write_file_atomic(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

void write_prices(const std::string& path, const Vec& p);
Vec read_prices(const std::string& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace fisher
