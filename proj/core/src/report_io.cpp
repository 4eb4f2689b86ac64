#include "promptlab/report_io.hpp"

#include "promptlab/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

namespace plab {

std::string format_double(double value)
{
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    // Shortest round-trip form never needs more than 17 significant digits.
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add_row(std::vector<std::string> cells)
{
    if (cells.size() != header_.size()) throw ShapeError("CSV row width differs from header");
    rows_.push_back(std::move(cells));
}

std::string CsvTable::str() const
{
    std::string out;
    auto emit = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    emit(header_);
    for (const auto& row : rows_) emit(row);
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const { write_text_file(path, str()); }

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

std::vector<std::filesystem::path> emit_plot_data(const std::vector<PlotSeries>& series,
                                                  const std::filesystem::path& dir)
{
    std::vector<std::filesystem::path> written;
    for (const auto& s : series) {
        std::string text = "# " + s.x_label + " " + s.y_label + "\n";
        for (const auto& [x, y] : s.points) text += format_double(x) + " " + format_double(y) + "\n";
        auto path = dir / (s.name + ".dat");
        write_text_file(path, text);
        written.push_back(std::move(path));
    }
    return written;
}

PlotSeries read_plot_data(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    PlotSeries s;
    s.name = path.stem().string();
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
        throw ParseError(path.string() + ":1", "missing '# x y' header line");
    std::istringstream header(line.substr(2));
    header >> s.x_label >> s.y_label;
    for (int lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = p + line.size();
        double x = 0.0;
        double y = 0.0;
        auto rx = std::from_chars(p, end, x);
        if (rx.ec != std::errc()) throw ParseError(path.string() + ":" + std::to_string(lineno), "bad x value");
        p = rx.ptr;
        while (p < end && (*p == ' ' || *p == '\t')) ++p;
        auto ry = std::from_chars(p, end, y);
        if (ry.ec != std::errc()) throw ParseError(path.string() + ":" + std::to_string(lineno), "bad y value");
        s.points.emplace_back(x, y);
    }
    return s;
}

} // namespace plab
