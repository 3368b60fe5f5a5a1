from .example import (
    AUDIO_DIM,
    RGB_DIM,
    SchemaError,
    VideoExample,
    WireFormatError,
    encode_example,
    parse_example,
    serialize_video,
)
from .synthetic import SyntheticSpecError, SyntheticTaskSpec, VideoDataset, generate_synthetic
from .tfrecord import (
    CorruptRecordError,
    TruncatedRecordError,
    read_tfrecord,
    read_tfrecord_file,
    write_tfrecord,
    write_tfrecord_file,
)


def load_dataset(paths, rgb_dim=RGB_DIM, audio_dim=AUDIO_DIM, aliases=None):
    """Read one or more TFRecord files of video-level examples."""
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]
    examples = (parse_example(rec, rgb_dim, audio_dim, aliases)
                for p in paths for rec in read_tfrecord_file(p))
    return VideoDataset.from_examples(examples)


def save_dataset(path, dataset, rgb_dim=RGB_DIM):
    return write_tfrecord_file(path, (serialize_video(ex) for ex in dataset.to_examples(rgb_dim)))
