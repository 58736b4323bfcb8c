#include "stadm/epoch.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "stadm/binary_io.hpp"
#include "stadm/errors.hpp"

namespace stadm {

namespace {
constexpr char kMagic[4] = {'S', 'T', 'A', 'D'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

EegEpoch make_epoch(Montage montage, double sample_rate_hz, Array data) {
    if (sample_rate_hz <= 0.0) throw ConfigError("epoch sample rate must be positive");
    if (data.ndim() != 2) throw DimensionError("epoch data must be channels x samples");
    if (data.shape()[0] != montage.channel_count())
        throw DimensionError("epoch rows (" + std::to_string(data.shape()[0]) +
                             ") do not match montage channels (" +
                             std::to_string(montage.channel_count()) + ")");
    EegEpoch e;
    e.montage = std::move(montage);
    e.sample_rate_hz = sample_rate_hz;
    e.data = std::move(data);
    return e;
}

void write_epoch(const std::string& path, const EegEpoch& epoch) {
    if (epoch.data.ndim() != 2) throw DimensionError("write_epoch: data must be rank 2");
    atomic_write_file(path, [&epoch](std::ostream& out) {
        BinaryWriter w(out);
        w.bytes(kMagic, 4);
        w.u32(kVersion);
        w.u32(static_cast<std::uint32_t>(epoch.channels()));
        w.u32(static_cast<std::uint32_t>(epoch.samples()));
        w.f64(epoch.sample_rate_hz);
        w.str16(epoch.montage.name);
        for (std::size_t i = 0; i < epoch.data.numel(); ++i)
            w.f32(static_cast<float>(epoch.data[i]));
    });
}

EegEpoch read_epoch(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open epoch file: " + path);
    BinaryReader r(in);

    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("bad magic in " + path + " (not an epoch file)");
    const std::uint32_t version = r.u32("version");
    if (version != kVersion)
        throw ParseError("unsupported epoch file version " + std::to_string(version));
    const std::uint32_t channels = r.u32("channel count");
    const std::uint32_t samples = r.u32("sample count");
    const double rate = r.f64("sample rate");
    const std::string montage_name = r.str16("montage name");
    if (rate <= 0.0 || !std::isfinite(rate)) throw ParseError("invalid sample rate in " + path);

    Array data({channels, samples});
    for (std::size_t i = 0; i < data.numel(); ++i)
        data[i] = static_cast<double>(r.f32("sample data"));

    Montage montage = is_builtin_montage(montage_name)
                          ? builtin_montage(montage_name)
                          : montage_without_geometry(montage_name, channels);
    if (montage.channel_count() != channels)
        throw ParseError("montage `" + montage_name + "` has " +
                         std::to_string(montage.channel_count()) + " channels but file has " +
                         std::to_string(channels));
    return make_epoch(std::move(montage), rate, std::move(data));
}

std::vector<EegEpoch> epoch_segments(const EegEpoch& continuous, double duration_s,
                                     const std::vector<std::size_t>& events) {
    if (duration_s <= 0.0) throw ConfigError("epoch duration must be positive");
    const std::size_t n =
        static_cast<std::size_t>(std::llround(duration_s * continuous.sample_rate_hz));
    if (n == 0) throw ConfigError("epoch duration rounds to zero samples");
    const std::size_t total = continuous.samples();
    const std::size_t ch = continuous.channels();

    std::vector<EegEpoch> out;
    out.reserve(events.size());
    for (std::size_t ev : events) {
        if (ev + n > total)
            throw RangeError("event at sample " + std::to_string(ev) + " plus " +
                             std::to_string(n) + " samples exceeds record length " +
                             std::to_string(total));
        Array seg({ch, n});
        for (std::size_t c = 0; c < ch; ++c)
            std::memcpy(seg.data() + c * n, continuous.data.data() + c * total + ev,
                        n * sizeof(double));
        out.push_back(make_epoch(continuous.montage, continuous.sample_rate_hz, std::move(seg)));
    }
    return out;
}

std::pair<EegEpoch, std::vector<std::size_t>> downsample_channels(const EegEpoch& hr,
                                                                  int factor) {
    const std::size_t target = target_channel_count(hr.channels(), factor);
    if (hr.channels() < target)
        throw RangeError("downsample target exceeds available channels");

    std::vector<std::size_t> kept;
    std::string lr_name;
    if (target == hr.channels()) {
        kept.resize(target);
        for (std::size_t i = 0; i < target; ++i) kept[i] = i;
        lr_name = hr.montage.name;
    } else {
        kept = farthest_point_subset(hr.montage, target);
        if (hr.montage.name == "synthetic-256" &&
            (target == 128 || target == 64 || target == 32 || target == 16))
            lr_name = "synthetic-" + std::to_string(target);
        else
            lr_name = hr.montage.name + "/fps" + std::to_string(target);
    }

    Montage lr_montage = montage_subset(hr.montage, kept, lr_name);
    const std::size_t n = hr.samples();
    Array data({target, n});
    for (std::size_t r = 0; r < kept.size(); ++r)
        std::memcpy(data.data() + r * n, hr.data.data() + kept[r] * n, n * sizeof(double));
    return {make_epoch(std::move(lr_montage), hr.sample_rate_hz, std::move(data)), kept};
}

}  // namespace stadm
