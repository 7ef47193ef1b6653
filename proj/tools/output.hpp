#pragma once

// Run artifacts: atomic file writes, CSV tables with a schema line, JSON
// documents and output-directory resolution.

#include "config.hpp"
#include "steadynorm/errors.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace steadynorm::cli {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

/// Writes via a temporary sibling and a rename, so readers never see a partial file.
inline void atomic_write(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
    }
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline Json read_json(const fs::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const Json::exception& e) {
        throw IoError("cannot parse '" + path.string() + "': " + e.what());
    }
}

inline void write_json(const fs::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

/// A CSV document: "# schema: <id>", a header row, then data rows.
class CsvWriter {
public:
    CsvWriter(std::string schema, const std::vector<std::string>& header) {
        text_ = "# schema: " + schema + "\n";
        row(header);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) text_ += ',';
            text_ += csv_field(fields[i]);
        }
        text_ += '\n';
    }

    void row(const std::vector<double>& values) {
        std::vector<std::string> f;
        f.reserve(values.size());
        for (double v : values) f.push_back(format_number(v));
        row(f);
    }

    [[nodiscard]] const std::string& str() const { return text_; }

private:
    std::string text_;
};

struct CsvTable {
    std::string schema;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw IoError("CSV column '" + name + "' not found");
    }

    [[nodiscard]] std::vector<double> numbers(const std::string& name) const {
        const auto c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) {
            const std::string& s = r.at(c);
            if (s == "nan" || s == "NA") {
                out.push_back(std::numeric_limits<double>::quiet_NaN());
            } else if (s == "inf" || s == "-inf") {
                out.push_back(s == "inf" ? std::numeric_limits<double>::infinity()
                                         : -std::numeric_limits<double>::infinity());
            } else {
                double x = 0.0;
                const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
                if (res.ec != std::errc()) throw IoError("CSV column '" + name + "' has a non-number '" + s + "'");
                out.push_back(x);
            }
        }
        return out;
    }
};

inline std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline CsvTable read_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string tag = "# schema: ";
            if (line.rfind(tag, 0) == 0) t.schema = line.substr(tag.size());
            continue;
        }
        auto fields = parse_csv_line(line);
        if (!have_header) {
            t.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != t.header.size()) throw IoError("ragged CSV row in '" + path.string() + "'");
            t.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw IoError("'" + path.string() + "' has no CSV header");
    return t;
}

/// Explicit --out wins; otherwise <root>/<subcommand>-<hash prefix>, where the
/// root is $STEADYNORM_OUTPUT_ROOT or "runs".
inline fs::path output_dir(const std::string& flag, const std::string& subcommand, const std::string& hash) {
    if (!flag.empty()) return flag;
    const char* env = std::getenv("STEADYNORM_OUTPUT_ROOT");
    const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
    return root / (subcommand + "-" + hash.substr(0, 12));
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
}

/// Manifest shared by all subcommands. No timestamps, so equal configs give equal bytes.
inline Json manifest(const std::string& subcommand, const Json& config) {
    const std::string canonical = config.dump();
    return Json{{"schema_version", kSchemaVersion},
                {"subcommand", subcommand},
                {"config_hash", git_blob_sha1(canonical)},
                {"config", config}};
}

}  // namespace steadynorm::cli
