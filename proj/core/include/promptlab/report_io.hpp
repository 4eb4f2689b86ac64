#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace plab {

// Locale-independent shortest round-trip form: at most 17 significant
// digits ("0.5", "15", "-6.591673732008658").
std::string format_double(double value);

// Minimal CSV: comma separated, '.' decimal, '\n' line ends.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    void add_row(std::vector<std::string> cells);
    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }
    std::string str() const;
    void write(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct PlotSeries {
    std::string name; // file stem
    std::string x_label;
    std::string y_label;
    std::vector<std::pair<double, double>> points;
};

// Writes "<dir>/<name>.dat": a "# x_label y_label" header line followed by
// whitespace-separated x y pairs. Returns the written paths in order.
std::vector<std::filesystem::path> emit_plot_data(const std::vector<PlotSeries>& series,
                                                  const std::filesystem::path& dir);

PlotSeries read_plot_data(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace plab
