#pragma once

// Built-in copies of data/attributes.txt and data/personas.txt.

#include <array>
#include <string_view>

namespace capcurate {

inline constexpr std::array<std::string_view, 108> kDefaultAttributes{{
    "speaker gender",
    "speaker age",
    "number of speakers",
    "speaker emotion",
    "speaking rate",
    "speaking style",
    "accent",
    "language",
    "transcription",
    "turn taking",
    "vocal pitch",
    "vocal timbre",
    "loudness of speech",
    "whispering",
    "laughter",
    "breathing sounds",
    "hesitations and fillers",
    "speaker intent",
    "conversation topic",
    "formality of speech",
    "background speech",
    "crowd presence",
    "vocal effort",
    "voice quality",
    "prosody",
    "emphasis",
    "singing voice",
    "vocal harmony",
    "lyrics",
    "music genre",
    "music mood",
    "tempo",
    "meter",
    "key and tonality",
    "chord progression",
    "melody",
    "rhythm pattern",
    "instrumentation",
    "lead instrument",
    "percussion",
    "bass line",
    "song structure",
    "dynamics",
    "production style",
    "recording era",
    "mixing quality",
    "stereo image",
    "reverberation",
    "distortion",
    "electronic effects",
    "live or studio recording",
    "cultural origin of music",
    "danceability",
    "energy level",
    "sound event identity",
    "sound source",
    "event count",
    "event order",
    "event timing",
    "event duration",
    "event loudness",
    "repetition of events",
    "onset sharpness",
    "sound texture",
    "material of source",
    "action causing sound",
    "animal sounds",
    "vehicle sounds",
    "weather sounds",
    "water sounds",
    "mechanical sounds",
    "household sounds",
    "alarm and signal sounds",
    "impact sounds",
    "footsteps",
    "door sounds",
    "tool sounds",
    "nature ambience",
    "urban ambience",
    "indoor ambience",
    "acoustic scene",
    "room size",
    "distance to source",
    "spatial movement",
    "direction of source",
    "foreground and background",
    "overlapping sources",
    "silence and pauses",
    "noise level",
    "noise type",
    "audio fidelity",
    "clipping and artifacts",
    "frequency balance",
    "bandwidth",
    "compression artifacts",
    "microphone characteristics",
    "recording device",
    "time of day",
    "season",
    "location",
    "social context",
    "narrative of the scene",
    "atmosphere",
    "emotional impact",
    "purpose of the recording",
    "plausibility",
    "comparison between segments",
    "change over time",
}};

inline constexpr std::array<std::string_view, 12> kDefaultPersonas{{
    "film sound designer",
    "indie game developer",
    "podcast producer",
    "music teacher",
    "children's audiobook narrator",
    "meditation app creator",
    "advertising copywriter",
    "theater stage manager",
    "documentary editor",
    "hobbyist electronic musician",
    "accessibility researcher",
    "tabletop game master",
}};

}  // namespace capcurate
