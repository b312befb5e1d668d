#include "nslab/snapshot.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace nslab {
namespace {

std::filesystem::path with_suffix(const std::filesystem::path& base, const char* suffix)
{
    return std::filesystem::path(base.string() + suffix);
}

std::uint64_t to_le(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::big)
        return __builtin_bswap64(v);
    return v;
}

} // namespace

void write_snapshot(const std::filesystem::path& base, const Field& f)
{
    const Domain& d = f.domain();
    nlohmann::json meta = {
        {"kind", to_string(d.kind())},
        {"n", d.dim()},
        {"shape", d.shape()},
        {"extent", d.extent()},
        {"components", f.components()},
        {"dtype", "f64le"},
        {"order", "row-major"},
    };
    {
        std::ofstream js(with_suffix(base, ".json"));
        if (!js)
            throw std::runtime_error("cannot write " + with_suffix(base, ".json").string());
        js << meta.dump(2) << '\n';
    }
    std::ofstream bin(with_suffix(base, ".bin"), std::ios::binary);
    if (!bin)
        throw std::runtime_error("cannot write " + with_suffix(base, ".bin").string());
    std::vector<std::uint64_t> words(f.data().size());
    for (std::size_t i = 0; i < words.size(); ++i)
        words[i] = to_le(std::bit_cast<std::uint64_t>(f.data()[i]));
    bin.write(reinterpret_cast<const char*>(words.data()),
              static_cast<std::streamsize>(words.size() * sizeof(std::uint64_t)));
}

Field read_snapshot(const std::filesystem::path& base)
{
    std::ifstream js(with_suffix(base, ".json"));
    if (!js)
        throw std::runtime_error("cannot read " + with_suffix(base, ".json").string());
    const auto meta = nlohmann::json::parse(js);
    if (meta.at("dtype") != "f64le" || meta.at("order") != "row-major")
        throw std::runtime_error("snapshot: unsupported dtype or order");
    const auto kind = domain_kind_from_string(meta.at("kind").get<std::string>());
    auto shape = meta.at("shape").get<std::vector<int>>();
    auto extent = meta.at("extent").get<std::vector<double>>();
    if (meta.at("n").get<int>() != static_cast<int>(shape.size()))
        throw std::runtime_error("snapshot: n does not match shape");
    Domain d = kind == DomainKind::torus ? Domain::torus(shape, extent) : Domain::box(shape, extent);
    const int components = meta.at("components").get<int>();

    std::ifstream bin(with_suffix(base, ".bin"), std::ios::binary);
    if (!bin)
        throw std::runtime_error("cannot read " + with_suffix(base, ".bin").string());
    std::vector<std::uint64_t> words(static_cast<std::size_t>(components) * d.size());
    bin.read(reinterpret_cast<char*>(words.data()),
             static_cast<std::streamsize>(words.size() * sizeof(std::uint64_t)));
    if (bin.gcount() != static_cast<std::streamsize>(words.size() * sizeof(std::uint64_t)))
        throw std::runtime_error("snapshot: truncated binary file");
    std::vector<double> data(words.size());
    for (std::size_t i = 0; i < words.size(); ++i)
        data[i] = std::bit_cast<double>(to_le(words[i]));
    return Field(std::move(d), components, std::move(data));
}

} // namespace nslab
