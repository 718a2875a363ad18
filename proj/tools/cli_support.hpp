#pragma once

// Output plumbing for the command-line driver: full-precision CSV, SHA-256 digests and
// the JSON run manifest written next to every set of results.

#include <json.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest representation that round-trips.
inline std::string num(double x) {
    if (x == 0.0) x = 0.0;  // no "-0"
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

/// Compact label for file names, e.g. 2.7 -> "2.7".
inline std::string tag(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const fs::path& path, std::initializer_list<const char*> header) : path_(path), out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string());
        bool first = true;
        for (const char* h : header) {
            out_ << (first ? "" : ",") << h;
            first = false;
        }
        out_ << '\n';
        columns_ = header.size();
    }

    CsvWriter& operator<<(double x) { return field(num(x)); }
    CsvWriter& operator<<(const std::string& s) { return field(s); }
    CsvWriter& operator<<(const char* s) { return field(s); }

    void end_row() {
        if (in_row_ != columns_) throw std::logic_error("csv row width mismatch in " + path_.string());
        out_ << '\n';
        in_row_ = 0;
    }

    const fs::path& path() const { return path_; }

private:
    CsvWriter& field(const std::string& s) {
        out_ << (in_row_ ? "," : "") << s;
        ++in_row_;
        return *this;
    }

    fs::path path_;
    std::ofstream out_;
    std::size_t columns_ = 0, in_row_ = 0;
};

inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char h[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(h, sizeof h, "%02x", md[i]);
        hex += h;
    }
    return hex;
}

inline std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

class Manifest {
public:
    Manifest(std::string command, std::vector<std::string> argv) {
        doc_["command"] = std::move(command);
        doc_["argv"] = std::move(argv);
        doc_["tool_version"] = kToolVersion;
        doc_["started"] = utc_now();
        doc_["outputs"] = json::array();
    }

    json& operator[](const char* key) { return doc_[key]; }

    void add_output(const fs::path& path) { files_.push_back(path); }

    /// Digests every registered output and writes manifest.json into `dir`.
    fs::path write(const fs::path& dir) {
        doc_["finished"] = utc_now();
        for (const auto& f : files_) {
            doc_["outputs"].push_back(
                {{"path", fs::relative(f, dir).generic_string()}, {"sha256", sha256_file(f)}, {"bytes", fs::file_size(f)}});
        }
        const fs::path path = dir / "manifest.json";
        std::ofstream(path) << doc_.dump(2) << '\n';
        return path;
    }

private:
    json doc_;
    std::vector<fs::path> files_;
};

/// Writes a JSON document with full-precision numbers.
inline void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace cli
