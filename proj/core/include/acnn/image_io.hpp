#pragma once

#include <string>
#include <vector>

#include "acnn/density.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// Binary PGM (P5), 8- or 16-bit. Values map linearly to [0,1].
void write_pgm(const std::string& path, const Tensor& image, int maxval = 255);
Tensor read_pgm(const std::string& path);

// 16-bit PGM scaled so the largest value maps to 65535 (perspective maps).
void write_pgm16_scaled(const std::string& path, const std::vector<double>& row_values,
                        int rows, int cols);

void write_mask(const std::string& path, const Mask& mask);
Mask read_mask(const std::string& path);

// Minimal CSV helpers: '#' lines are comments, fields never contain commas.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int column(const std::string& name) const;
};
CsvTable read_csv(const std::string& path);
void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

}  // namespace acnn
