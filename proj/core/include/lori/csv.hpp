#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <variant>
#include <vector>

#include "lori/errors.hpp"

namespace lori {

/// Floats print with 9 significant digits.
std::string csv_format(double v);

using CsvValue = std::variant<std::string, double, std::int64_t, std::uint64_t>;

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    void row(std::initializer_list<CsvValue> values);

private:
    std::ofstream out_;
    std::size_t columns_;
};

} // namespace lori
