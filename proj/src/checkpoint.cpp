#include "neusim/ad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace neusim::ad {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write("NPCK", 4);
    put_u32(os, 1u);
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    // ParamStore iterates a std::map, i.e. names already in lexicographic order.
    for (const auto& [name, t] : params) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

ParamStore load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "NPCK", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    std::uint32_t version = get_u32(is);
    if (version != 1u)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    std::uint32_t count = get_u32(is);
    ParamStore params;
    std::string prev;
    for (std::uint32_t e = 0; e < count; ++e) {
        std::uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (!is) throw std::runtime_error("checkpoint: truncated name");
        if (e > 0 && !(prev < name))
            throw std::runtime_error("checkpoint: entries not in lexicographic order");
        prev = name;
        std::uint32_t rank = get_u32(is);
        if (rank > 2) throw std::runtime_error("checkpoint: rank > 2 for '" + name + "'");
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = get_u32(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated values for '" + name + "'");
        params.create(name, std::move(t));
    }
    return params;
}

} // namespace neusim::ad
