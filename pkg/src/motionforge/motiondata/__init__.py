from .clips import (
    ACTIONS,
    DEFAULT_FPS,
    MotionClip,
    MotionFormatError,
    MotionWindow,
    load_clips,
    one_hot,
    read_clip_csv,
    write_clip_csv,
)
from .preprocess import (
    GAIT_WINDOW,
    STD_FLOOR,
    NormalizationStats,
    compute_stats,
    denormalize,
    detect_heel_strikes,
    normalize,
    remove_global_motion,
    resample,
    segment_gait,
    window_actions,
)
from .procedural import (
    DEFAULT_WINDOWS_PER_SUBJECT,
    SubjectStyle,
    build_dataset,
    clips_to_windows,
    forward_kinematics,
    skeleton_deviation,
    synth_procedural,
)
from .skeleton import UP, SkeletonSpec, default_skeleton, read_skeleton, write_skeleton
