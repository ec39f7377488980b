#include "albedo/report_io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "albedo/errors.hpp"

namespace albedo {

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw ConfigError("cannot create output directory " + path + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw ConfigError("write failed for " + path);
}

void write_doubles(const std::string& path, const std::vector<double>& values) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!os) throw ConfigError("write failed for " + path);
}

void write_field(const std::string& dir, const std::string& name, const ScalarField& field,
                 const std::string& provenance_json) {
    ensure_dir(dir);
    write_doubles(dir + "/" + name + ".f64", field.v);
    std::ostringstream os;
    os << "{\n  \"name\": \"" << name << "\",\n  \"dtype\": \"float64\",\n"
       << "  \"byte_order\": \"little\",\n  \"layout\": \"x-major\",\n"
       << "  \"dimension\": " << field.n << ",\n  \"grid_n\": " << field.npts << ",\n"
       << "  \"support_radius\": " << std::setprecision(17) << field.rho << ",\n"
       << "  \"provenance\": " << provenance_json << "\n}\n";
    write_text_file(dir + "/" + name + ".json", os.str());
}

}  // namespace albedo
