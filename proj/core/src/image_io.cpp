#include "acnn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace acnn {

void write_pgm(const std::string& path, const Tensor& image, int maxval) {
    if (image.rank() != 2) throw std::invalid_argument("write_pgm: image must be [H,W]");
    if (maxval != 255 && maxval != 65535)
        throw std::invalid_argument("write_pgm: maxval must be 255 or 65535");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_pgm: cannot open " + path);
    const int rows = image.dim(0), cols = image.dim(1);
    f << "P5\n" << cols << " " << rows << "\n" << maxval << "\n";
    for (long long i = 0; i < image.numel(); ++i) {
        const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
        const unsigned q = static_cast<unsigned>(std::lround(v * maxval));
        if (maxval == 255) {
            f.put(static_cast<char>(q));
        } else {
            f.put(static_cast<char>(q >> 8));
            f.put(static_cast<char>(q & 0xff));
        }
    }
    if (!f) throw IoError("write_pgm: write failed for " + path);
}

namespace {

int next_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    for (;;) {
        int ch = in.peek();
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(ch)) {
            in.get();
        } else {
            break;
        }
    }
    int value;
    if (!(in >> value)) throw IoError("read_pgm: malformed header");
    return value;
}

}  // namespace

Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_pgm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw IoError("read_pgm: not a binary PGM: " + path);
    const int cols = next_pnm_token(f);
    const int rows = next_pnm_token(f);
    const int maxval = next_pnm_token(f);
    f.get();  // single whitespace after maxval
    if (rows < 1 || cols < 1 || maxval < 1 || maxval > 65535)
        throw IoError("read_pgm: bad dimensions in " + path);
    Tensor image(Shape{rows, cols});
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(static_cast<size_t>(rows) * cols * bytes);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("read_pgm: truncated pixel data in " + path);
    for (long long i = 0; i < image.numel(); ++i) {
        unsigned v = bytes == 1 ? buf[static_cast<size_t>(i)]
                                : (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
        image[i] = static_cast<float>(v) / static_cast<float>(maxval);
    }
    return image;
}

void write_pgm16_scaled(const std::string& path, const std::vector<double>& row_values,
                        int rows, int cols) {
    if (static_cast<int>(row_values.size()) != rows)
        throw std::invalid_argument("write_pgm16_scaled: row count mismatch");
    double peak = 0.0;
    for (double v : row_values) peak = std::max(peak, v);
    if (peak <= 0.0) peak = 1.0;
    Tensor image(Shape{rows, cols});
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            image.at(r, c) = static_cast<float>(row_values[static_cast<size_t>(r)] / peak);
    write_pgm(path, image, 65535);
}

void write_mask(const std::string& path, const Mask& mask) {
    Tensor image(Shape{mask.rows, mask.cols});
    for (size_t i = 0; i < mask.on.size(); ++i) image[static_cast<long long>(i)] = mask.on[i] ? 1.0f : 0.0f;
    write_pgm(path, image, 255);
}

Mask read_mask(const std::string& path) {
    Tensor image = read_pgm(path);
    Mask mask;
    mask.rows = image.dim(0);
    mask.cols = image.dim(1);
    mask.on.resize(static_cast<size_t>(image.numel()));
    for (long long i = 0; i < image.numel(); ++i)
        mask.on[static_cast<size_t>(i)] = image[i] >= 0.5f ? 1 : 0;
    return mask;
}

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    throw IoError("csv: missing column '" + name + "'");
}

CsvTable read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("read_csv: cannot open " + path);
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
        } else {
            table.rows.push_back(std::move(fields));
        }
    }
    return table;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_text_file: cannot open " + path);
    f << contents;
    if (!f) throw IoError("write_text_file: write failed for " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace acnn
