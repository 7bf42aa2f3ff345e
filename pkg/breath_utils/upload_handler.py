"""
Upload of evaluate and preprocess output directories
"""

import logging
import os

from .s3_uploader import upload_run_artifacts

logger = logging.getLogger(__name__)

# uploadable files written by `evaluate` (write_report + predictions) and by `preprocess`
RUN_KINDS = {
    'evaluation': ('report.json', 'metrics.csv', 'table.txt', 'predictions.csv'),
    'processed cohort': ('spectra.csv', 'tic.csv', 'discards.csv'),
}


def describe_run_directory(directory):
    """Which known run outputs and charts a directory holds, grouped by kind"""
    present = {kind: [name for name in names if os.path.isfile(os.path.join(directory, name))]
               for kind, names in RUN_KINDS.items()}
    present['charts'] = sorted(name for name in os.listdir(directory) if name.endswith('.png')) \
        if os.path.isdir(directory) else []
    return {kind: names for kind, names in present.items() if names}


def upload_reports(directory, run_name=None):
    """
    Upload an evaluate or preprocess output directory without ever failing the run.

    The run name defaults to the directory name. Directories holding none of
    the known outputs are skipped. ``processed.joblib`` and model containers
    stay local.

    Returns:
        dict: Upload results plus ``contents`` (the kinds found), with an
        ``error`` entry when the upload was skipped or failed
    """
    if run_name is None:
        run_name = os.path.basename(os.path.abspath(directory))
    contents = describe_run_directory(directory)
    if not contents:
        message = f"no evaluation report, processed cohort or chart in {directory}"
        logger.warning(f"S3 upload skipped: {message}")
        return {'success_count': 0, 'failure_count': 0, 'contents': {}, 'error': message}

    print(f"\n{'='*60}")
    print(f"UPLOADING {run_name} TO S3")
    print(f"{'='*60}")
    for kind, names in contents.items():
        print(f"  {kind}: {', '.join(names)}")

    try:
        result = upload_run_artifacts(directory, run_name)
    except ValueError as e:
        print(f"\n⚠️  S3 upload skipped: {e}")
        print("Set S3_BUCKET_NAME, AWS_ACCESS_KEY_ID and AWS_SECRET_ACCESS_KEY to enable it.")
        return {'success_count': 0, 'failure_count': 0, 'contents': contents, 'error': str(e)}
    except Exception as e:
        logger.exception(f"Upload of {run_name} failed")
        print(f"\n❌ Upload of {run_name} failed: {e}; outputs remain in {directory}")
        return {'success_count': 0, 'failure_count': 0, 'contents': contents, 'error': str(e)}

    if result['failure_count']:
        print(f"\n⚠️  {result['failure_count']} of {result['failure_count'] + result['success_count']} "
              f"files failed to upload")
    else:
        print(f"\n🎉 Uploaded {result['success_count']} files for {run_name}")
    result['contents'] = contents
    return result
