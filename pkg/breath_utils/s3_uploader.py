#!/usr/bin/env python3
"""
S3 Upload Utility for Breath Analysis Runs
==========================================
Uploads report, table and chart files from run directories to S3 buckets

Environment Variables:
- S3_BUCKET_NAME: Target S3 bucket (required)
- AWS_ACCESS_KEY_ID: AWS access key (required)
- AWS_SECRET_ACCESS_KEY: AWS secret key (required)
- AWS_REGION: AWS region (optional, defaults to us-east-1)
- AWS_ENDPOINT_URL: Custom S3 endpoint URL (optional, for S3-compatible services)
- S3_KEY_PREFIX: S3 key prefix (optional, defaults to 'runs')
"""

import glob
import os
from datetime import datetime

import boto3
from botocore.exceptions import ClientError, NoCredentialsError

ARTIFACT_PATTERNS = ("*.png", "*.csv", "*.json", "*.txt")
CONTENT_TYPES = {
    '.png': 'image/png',
    '.csv': 'text/csv',
    '.json': 'application/json',
    '.txt': 'text/plain',
}


def _s3_settings():
    settings = {
        'bucket_name': os.getenv('S3_BUCKET_NAME'),
        'aws_access_key_id': os.getenv('AWS_ACCESS_KEY_ID'),
        'aws_secret_access_key': os.getenv('AWS_SECRET_ACCESS_KEY'),
        'aws_region': os.getenv('AWS_REGION', 'us-east-1'),
        'aws_endpoint_url': os.getenv('AWS_ENDPOINT_URL'),
        's3_key_prefix': os.getenv('S3_KEY_PREFIX', 'runs'),
    }
    for key, variable in (('bucket_name', 'S3_BUCKET_NAME'),
                          ('aws_access_key_id', 'AWS_ACCESS_KEY_ID'),
                          ('aws_secret_access_key', 'AWS_SECRET_ACCESS_KEY')):
        if not settings[key]:
            raise ValueError(f"{variable} environment variable is required")
    return settings


def find_artifacts(directory, patterns=ARTIFACT_PATTERNS):
    files = set()
    for pattern in patterns:
        files.update(glob.glob(os.path.join(directory, pattern)))
    return sorted(files)


def upload_run_artifacts(directory, run_name=None, patterns=ARTIFACT_PATTERNS):
    """
    Upload the artifacts of one run directory to S3

    Args:
        directory (str): Run directory holding report, table and chart files
        run_name (str): Optional run name for the S3 key prefix.
                        If None, uses the directory name
        patterns (tuple): Glob patterns of the files to upload

    Returns:
        dict: Upload results with success/failure counts and file details

    Raises:
        ValueError: when a required environment variable is missing
    """
    settings = _s3_settings()
    bucket_name = settings['bucket_name']
    aws_region = settings['aws_region']
    aws_endpoint_url = settings['aws_endpoint_url']
    s3_key_prefix = settings['s3_key_prefix']

    if run_name is None:
        run_name = os.path.basename(os.path.abspath(directory))

    print(f"Uploading artifacts for {run_name} to S3 bucket: {bucket_name}")
    print(f"Source directory: {directory}")
    print(f"S3 key prefix: {s3_key_prefix}/{run_name}")

    try:
        s3_client = boto3.client(
            's3',
            aws_access_key_id=settings['aws_access_key_id'],
            aws_secret_access_key=settings['aws_secret_access_key'],
            region_name=aws_region,
            endpoint_url=aws_endpoint_url
        )
        if aws_endpoint_url:
            print(f"Initialized S3 client for region: {aws_region} using custom endpoint: {aws_endpoint_url}")
        else:
            print(f"Initialized S3 client for region: {aws_region}")
    except NoCredentialsError:
        raise ValueError("Invalid AWS credentials provided")

    files = find_artifacts(directory, patterns)
    result = {
        'success_count': 0,
        'failure_count': 0,
        'uploaded_files': [],
        'failed_files': [],
        'bucket_name': bucket_name,
        'run_name': run_name,
    }
    if not files:
        print(f"No artifacts found in directory: {directory}")
        return result

    print(f"Found {len(files)} files to upload")
    timestamp = datetime.now().strftime('%Y-%m-%d')

    for path in files:
        filename = os.path.basename(path)
        s3_key = f"{s3_key_prefix}/{run_name.lower()}/{filename}"
        try:
            print(f"Uploading {filename} to s3://{bucket_name}/{s3_key}")
            s3_client.upload_file(
                path,
                bucket_name,
                s3_key,
                ExtraArgs={
                    'ContentType': CONTENT_TYPES.get(os.path.splitext(filename)[1], 'application/octet-stream'),
                    'CacheControl': 'max-age=300',
                    'Metadata': {
                        'run': run_name,
                        'upload_date': timestamp,
                        'source': 'breath_analysis',
                    }
                }
            )
            result['uploaded_files'].append({
                'local_file': path,
                'filename': filename,
                's3_key': s3_key,
                's3_url': f"https://{bucket_name}.s3.{aws_region}.amazonaws.com/{s3_key}",
            })
            print(f"✅ Uploaded: {filename}")
        except ClientError as e:
            print(f"❌ Failed to upload {filename}: {e}")
            result['failed_files'].append({'local_file': path, 'filename': filename, 'error': str(e)})
        except Exception as e:
            print(f"❌ Unexpected error uploading {filename}: {e}")
            result['failed_files'].append({'local_file': path, 'filename': filename, 'error': str(e)})

    result['success_count'] = len(result['uploaded_files'])
    result['failure_count'] = len(result['failed_files'])

    print(f"\n📊 Upload Summary for {run_name}:")
    print(f"✅ Uploaded: {result['success_count']} files")
    print(f"❌ Failed: {result['failure_count']} files")
    for file_info in result['failed_files']:
        print(f"  • {file_info['filename']}: {file_info['error']}")
    return result


def upload_multiple_runs(base_directory, run_names=None):
    """
    Upload artifacts for several run directories

    Args:
        base_directory (str): Directory containing one subdirectory per run
        run_names (list): Runs to upload. If None, every subdirectory holding artifacts

    Returns:
        dict: Per-run results plus overall totals
    """
    if run_names is None:
        run_names = sorted(
            item for item in os.listdir(base_directory)
            if os.path.isdir(os.path.join(base_directory, item))
            and find_artifacts(os.path.join(base_directory, item))
        )

    print(f"Uploading artifacts for runs: {run_names}")
    all_results = {}
    total_success = 0
    total_failure = 0

    for run_name in run_names:
        run_dir = os.path.join(base_directory, run_name)
        if not os.path.isdir(run_dir):
            print(f"⚠️  Directory not found: {run_dir}")
            continue
        print(f"\n{'='*60}")
        print(f"Processing {run_name}")
        print(f"{'='*60}")
        try:
            result = upload_run_artifacts(run_dir, run_name)
        except Exception as e:
            print(f"❌ Failed to process {run_name}: {e}")
            result = {'success_count': 0, 'failure_count': 0, 'uploaded_files': [], 'failed_files': [],
                      'error': str(e)}
        all_results[run_name] = result
        total_success += result['success_count']
        total_failure += result['failure_count']

    print(f"\n🎯 Overall Summary:")
    print(f"✅ Total successful uploads: {total_success}")
    print(f"❌ Total failed uploads: {total_failure}")
    print(f"📁 Runs processed: {len(all_results)}")

    return {
        'runs': all_results,
        'total_success': total_success,
        'total_failure': total_failure,
    }
