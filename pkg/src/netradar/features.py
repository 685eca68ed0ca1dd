"""Column layout of the per-(radar, target) observation feature matrix.

Every radar observes an m x 23 matrix, one row per target, built only from
its own tracks, public radar positions, and shared previous-step summaries.
Columns (0-based):

 0  rel_x                estimated target position minus radar position, x
 1  rel_y                ... y
 2  range                estimated distance radar -> target
 3  bearing_sin          sin of estimated bearing from the radar
 4  bearing_cos          cos of estimated bearing
 5  vel_x                estimated target velocity, x
 6  vel_y                ... y
 7  speed                estimated target speed
 8  closing_speed        range rate toward the radar (positive = approaching)
 9  pos_cov_trace        trace of the track's position covariance
 10 own_area             this radar's uncertainty-ellipse area (capped)
 11 log_prev_inter       log1p of the previous step's network intersection area
 12 staleness            steps since this radar last measured the target (capped)
 13 in_fov               1.0 if the estimated position is inside this radar's FOV
 14 budget_slack         previous-step unspent budget fraction of this radar
 15 cost_norm            tracking cost of the target divided by the radar budget
 16 other_dist           distance from the estimated position to the closest
                         other radar
 17 other_rel_x          that radar's position minus the estimated position, x
 18 other_rel_y          ... y
 19 other_coverage       fraction of other radars whose FOV contains the
                         estimated position
 20 committed_frac       fraction of the network budget already committed by
                         radars that acted earlier in the current step
 21 est_utility          previous-step per-target utility exp(-area/area_scale),
                         shared between radars
 22 est_utility_delta    change of est_utility versus one step earlier

All columns are divided by fixed scenario-level scales so magnitudes stay
O(1); the mask of in-FOV targets travels alongside the matrix and is applied
downstream.
"""

NUM_FEATURES = 23

REL_X = 0
REL_Y = 1
RANGE = 2
BEARING_SIN = 3
BEARING_COS = 4
VEL_X = 5
VEL_Y = 6
SPEED = 7
CLOSING_SPEED = 8
POS_COV_TRACE = 9
OWN_AREA = 10
LOG_PREV_INTER = 11
STALENESS = 12
IN_FOV = 13
BUDGET_SLACK = 14
COST_NORM = 15
OTHER_DIST = 16
OTHER_REL_X = 17
OTHER_REL_Y = 18
OTHER_COVERAGE = 19
COMMITTED_FRAC = 20
EST_UTILITY = 21
EST_UTILITY_DELTA = 22

# Sentinel feature index for a constant 1.0 input (used by linear scorers).
CONSTANT = -1

STALENESS_CAP = 20.0
