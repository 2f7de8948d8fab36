//! Rotation algebra and forward kinematics of the 19-DoF robot model.

mod model;
mod rotation;

pub use model::{
    FootSpec, Frame, JointSpec, JointVec, KeypointSpec, Keypoints, RobotModel, RootPose,
    KEYPOINT_DIM, NUM_JOINTS, NUM_KEYPOINTS, NUM_LOWER, NUM_UPPER, ROOT_LINK,
};
pub use rotation::{
    axis_angle_to_quat, project_to_axis, quat_to_axis_angle, wrap_angle, AxisAngle, AxisTracker,
    Quaternion, Vec3, AXIS_EPSILON, DEFAULT_AXIS, UNIT_TOLERANCE,
};
