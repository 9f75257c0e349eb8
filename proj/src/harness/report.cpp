#include <algorithm>
#include <cstdio>
#include <map>

#include "duse/harness.hpp"

namespace duse::harness {

namespace {

constexpr const char* missing_cell = "—";

std::string rate_label(double rate) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g%%", rate * 100.0);
    return buf;
}

std::string cell(const eval_report& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", r.mean_accuracy * 100.0, r.std_accuracy * 100.0);
    return buf;
}

std::size_t display_width(const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

std::string pad(const std::string& s, std::size_t width, bool left) {
    const std::string fill(width - std::min(width, display_width(s)), ' ');
    return left ? s + fill : fill + s;
}

}  // namespace

table_format parse_table_format(const std::string& text) {
    if (text == "csv") return table_format::csv;
    if (text == "text") return table_format::text;
    throw invalid_input("unknown report format '" + text + "' (expected csv or text)");
}

std::string render_report(const std::vector<eval_report>& reports, table_format format) {
    if (reports.empty()) throw invalid_input("render_report: no reports");
    for (const auto& r : reports)
        if (r.dataset_digest != reports.front().dataset_digest)
            throw invalid_input("render_report: reports come from different datasets (" +
                                digest_hex(reports.front().dataset_digest) + " vs " + digest_hex(r.dataset_digest) + ")");

    std::vector<std::string> methods;
    std::vector<double> rates;
    std::map<std::pair<std::string, double>, const eval_report*> cells;
    for (const auto& r : reports) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        if (std::find(rates.begin(), rates.end(), r.rate) == rates.end()) rates.push_back(r.rate);
        cells[{r.method, r.rate}] = &r;
    }
    std::sort(rates.begin(), rates.end());

    std::vector<std::vector<std::string>> rows;
    rows.push_back({"method"});
    for (double rate : rates) rows.front().push_back(rate_label(rate));
    for (const auto& m : methods) {
        std::vector<std::string> row{m};
        for (double rate : rates) {
            const auto it = cells.find({m, rate});
            row.push_back(it == cells.end() ? missing_cell : cell(*it->second));
        }
        rows.push_back(std::move(row));
    }

    std::string out;
    if (format == table_format::csv) {
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
            out += '\n';
        }
        return out;
    }
    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], display_width(row[i]));
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += "  ";
            out += pad(row[i], widths[i], i == 0);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        out += '\n';
    }
    return out;
}

std::string render_report(const std::vector<std::filesystem::path>& report_paths, table_format format) {
    std::vector<eval_report> reports;
    for (const auto& p : report_paths) {
        const auto bytes = read_file_bytes(p);
        reports.push_back(eval_report::from_json(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
    }
    return render_report(reports, format);
}

}  // namespace duse::harness
